#include "refmort/apc_model.hpp"

#include "refmort/csv.hpp"
#include "refmort/errors.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace refmort {

ApcDesign ApcDesign::from_cells(std::span<const MortalityCell> cells, bool screening_term,
                                int df) {
    if (cells.empty()) {
        throw InputError("cannot build an APC design from zero cells");
    }
    std::vector<double> years, cohorts, ages;
    std::set<std::string> regions;
    years.reserve(cells.size());
    cohorts.reserve(cells.size());
    ages.reserve(cells.size());
    for (const auto &c : cells) {
        years.push_back(c.year);
        cohorts.push_back(c.cohort);
        ages.push_back(c.age());
        regions.insert(c.region);
    }
    ApcDesign design;
    design.period_knots = knots_from_data(years, df);
    design.cohort_knots = knots_from_data(cohorts, df);
    design.age_knots = knots_from_data(ages, df);
    design.regions.assign(regions.begin(), regions.end());
    design.screening_term = screening_term;
    return design;
}

std::vector<std::string> ApcDesign::labels() const {
    std::vector<std::string> out;
    auto add_block = [&](const char *name, const KnotSet &k) {
        for (int j = 1; j <= k.df(); ++j) {
            out.push_back(std::string("ns(") + name + ")" + std::to_string(j));
        }
    };
    add_block("year", period_knots);
    add_block("cohort", cohort_knots);
    add_block("age", age_knots);
    for (const auto &r : regions) {
        out.push_back("region:" + r);
    }
    if (screening_term) {
        out.push_back(kScreeningLabel);
    }
    return out;
}

std::size_t ApcDesign::columns() const {
    return static_cast<std::size_t>(period_knots.df() + cohort_knots.df() + age_knots.df()) +
           regions.size() + (screening_term ? 1 : 0);
}

void ApcDesign::fill_row(const MortalityCell &cell, std::span<double> row) const {
    std::size_t pos = 0;
    auto block = [&](double x, const KnotSet &k) {
        const auto df = static_cast<std::size_t>(k.df());
        natural_basis_row(x, k, row.subspan(pos, df));
        pos += df;
    };
    block(cell.year, period_knots);
    block(cell.cohort, cohort_knots);
    block(cell.age(), age_knots);
    const auto it = std::lower_bound(regions.begin(), regions.end(), cell.region);
    if (it == regions.end() || *it != cell.region) {
        throw InputError("region '" + cell.region + "' is not part of the fitted model");
    }
    for (std::size_t r = 0; r < regions.size(); ++r) {
        row[pos + r] = 0.0;
    }
    row[pos + static_cast<std::size_t>(it - regions.begin())] = 1.0;
    pos += regions.size();
    if (screening_term) {
        row[pos] = cell.scr_indicator;
    }
}

DesignMatrix ApcDesign::build(std::span<const MortalityCell> cells) const {
    DesignMatrix X;
    X.labels = labels();
    const auto p = X.labels.size();
    // Row-major scratch then transpose into Eigen's column-major storage.
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> values(
        static_cast<Eigen::Index>(cells.size()), static_cast<Eigen::Index>(p));
    for (std::size_t i = 0; i < cells.size(); ++i) {
        fill_row(cells[i], std::span<double>(values.row(static_cast<Eigen::Index>(i)).data(), p));
    }
    X.values = values;
    return X;
}

FitRows usable_rows(std::span<const MortalityCell> cells) {
    FitRows rows;
    rows.cells.reserve(cells.size());
    for (const auto &c : cells) {
        if (!(c.person_years > 0.0)) {
            ++rows.excluded_zero_person_years;
        } else if (!(c.prop_target > 0.0)) {
            ++rows.excluded_zero_prop_target;
        } else {
            rows.cells.push_back(c);
        }
    }
    return rows;
}

std::vector<double> log_offsets(std::span<const MortalityCell> cells) {
    std::vector<double> out;
    out.reserve(cells.size());
    for (const auto &c : cells) {
        out.push_back(std::log(c.person_years) + std::log(c.prop_target));
    }
    return out;
}

ApcFit fit_apc(std::span<const MortalityCell> cells, bool screening_term,
               const GlmOptions &options, int df) {
    ApcFit fit;
    fit.design = ApcDesign::from_cells(cells, screening_term, df);
    const auto X = fit.design.build(cells);
    std::vector<double> y;
    y.reserve(cells.size());
    for (const auto &c : cells) {
        y.push_back(c.cases);
    }
    const auto offset = log_offsets(cells);
    GlmOptions opts = options;
    if (opts.start && opts.start->size() != X.cols()) {
        opts.start.reset();
    }
    fit.glm = fit_poisson(X, y, offset, opts);
    return fit;
}

std::vector<double> ApcFit::expected(std::span<const MortalityCell> cells) const {
    const auto X = design.build(cells);
    const auto offset = log_offsets(cells);
    const Eigen::VectorXd mu = predict_mean(glm, X, offset);
    return {mu.data(), mu.data() + mu.size()};
}

std::vector<double> ApcFit::expected_without_screening(std::span<const MortalityCell> cells) const {
    std::vector<MortalityCell> base(cells.begin(), cells.end());
    for (auto &c : base) {
        c.scr_indicator = 0;
        c.prop_target = 1.0;
    }
    return expected(base);
}

namespace {

void write_knots(std::ostream &out, const char *name, const KnotSet &k) {
    out << "knots " << name << ' ' << csv::format_double(k.lower) << ' '
        << csv::format_double(k.upper);
    for (double v : k.interior) {
        out << ' ' << csv::format_double(v);
    }
    out << '\n';
}

} // namespace

void write_model(const ApcFit &fit, std::ostream &out) {
    out << "refmort-apc-model 1\n";
    write_knots(out, "year", fit.design.period_knots);
    write_knots(out, "cohort", fit.design.cohort_knots);
    write_knots(out, "age", fit.design.age_knots);
    out << "regions";
    for (const auto &r : fit.design.regions) {
        out << ' ' << r;
    }
    out << '\n';
    out << "screening " << (fit.design.screening_term ? 1 : 0) << '\n';
    for (const auto &label : fit.glm.labels) {
        out << "coef " << label << ' ';
        if (auto v = fit.glm.coefficient(label)) {
            out << csv::format_double(*v) << ' ' << csv::format_double(*fit.glm.standard_error(label));
        } else {
            out << "aliased";
        }
        out << '\n';
    }
    out << "deviance " << csv::format_double(fit.glm.deviance) << '\n';
    out << "iterations " << fit.glm.iterations << " converged " << (fit.glm.converged ? 1 : 0)
        << '\n';
}

ApcFit read_model(std::istream &in) {
    ApcFit fit;
    std::string line;
    bool header = false;
    std::vector<std::pair<std::string, std::optional<std::pair<double, double>>>> coefs;
    auto parse_num = [](const std::string &s) {
        return csv::parse_double(s, 0, "model value");
    };
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) {
            continue;
        }
        if (tag == "refmort-apc-model") {
            int version = 0;
            ls >> version;
            if (version != 1) {
                throw InputError("unsupported model file version");
            }
            header = true;
        } else if (tag == "knots") {
            std::string name, tok;
            ls >> name;
            std::vector<double> values;
            while (ls >> tok) {
                values.push_back(parse_num(tok));
            }
            if (values.size() < 2) {
                throw InputError("model file: knots line needs two boundary knots");
            }
            KnotSet k{values[0], values[1], {values.begin() + 2, values.end()}};
            if (name == "year") {
                fit.design.period_knots = k;
            } else if (name == "cohort") {
                fit.design.cohort_knots = k;
            } else if (name == "age") {
                fit.design.age_knots = k;
            } else {
                throw InputError("model file: unknown knot block '" + name + "'");
            }
        } else if (tag == "regions") {
            std::string r;
            while (ls >> r) {
                fit.design.regions.push_back(r);
            }
        } else if (tag == "screening") {
            int s = 0;
            ls >> s;
            fit.design.screening_term = s != 0;
        } else if (tag == "coef") {
            std::string label, value, se;
            ls >> label >> value;
            if (value == "aliased") {
                coefs.emplace_back(label, std::nullopt);
            } else {
                ls >> se;
                coefs.emplace_back(label, std::make_pair(parse_num(value), parse_num(se)));
            }
        } else if (tag == "deviance") {
            std::string v;
            ls >> v;
            fit.glm.deviance = parse_num(v);
        } else if (tag == "iterations") {
            std::string conv_tag;
            int conv = 0;
            ls >> fit.glm.iterations >> conv_tag >> conv;
            fit.glm.converged = conv != 0;
        }
    }
    if (!header) {
        throw InputError("not a refmort model file");
    }
    fit.glm.labels = fit.design.labels();
    if (coefs.size() != fit.glm.labels.size()) {
        throw InputError("model file: coefficient count does not match design");
    }
    std::vector<double> values, ses;
    for (std::size_t j = 0; j < coefs.size(); ++j) {
        if (coefs[j].first != fit.glm.labels[j]) {
            throw InputError("model file: coefficient '" + coefs[j].first +
                             "' out of order (expected '" + fit.glm.labels[j] + "')");
        }
        if (coefs[j].second) {
            fit.glm.retained.push_back(j);
            values.push_back(coefs[j].second->first);
            ses.push_back(coefs[j].second->second);
        } else {
            fit.glm.aliased.push_back(coefs[j].first);
        }
    }
    const auto p = static_cast<Eigen::Index>(values.size());
    fit.glm.coefficients = Eigen::Map<Eigen::VectorXd>(values.data(), p);
    fit.glm.covariance = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index k = 0; k < p; ++k) {
        fit.glm.covariance(k, k) = ses[static_cast<std::size_t>(k)] * ses[static_cast<std::size_t>(k)];
    }
    return fit;
}

} // namespace refmort
