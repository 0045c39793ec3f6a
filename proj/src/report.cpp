#include "refmort/report.hpp"

#include "refmort/csv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace refmort {

nlohmann::json result_to_json(const EstimateResult &result) {
    using nlohmann::json;
    json j;
    j["method"] = std::string(to_string(result.method));
    j["screening_rate_ratio"] = result.screening_rate_ratio;
    j["log_effect"] = result.log_effect;
    j["ci_level"] = result.ci_level;
    j["ci_low"] = result.ci_low ? json(*result.ci_low) : json(nullptr);
    j["ci_high"] = result.ci_high ? json(*result.ci_high) : json(nullptr);

    const auto &d = result.diagnostics;
    json diag;
    diag["iterations"] = d.iterations;
    diag["converged"] = d.converged;
    diag["log_likelihood"] = d.log_likelihood;
    diag["rows_used"] = d.rows_used;
    diag["rows_excluded"] = d.rows_excluded;
    diag["aliased"] = d.aliased;
    diag["warnings"] = d.warnings;
    for (const auto &[k, v] : d.values) {
        diag["values"][k] = v;
    }
    j["diagnostics"] = diag;

    if (result.bootstrap) {
        const auto &b = *result.bootstrap;
        j["bootstrap"] = {{"replicates", b.requested},
                          {"seed", b.seed},
                          {"failed", b.failed},
                          {"failure_fraction", b.failure_fraction},
                          {"unreliable", b.unreliable}};
    }
    if (result.model) {
        json coef = json::object();
        const auto &glm = result.model->glm;
        for (std::size_t k = 0; k < glm.retained.size(); ++k) {
            coef[glm.labels[glm.retained[k]]] = glm.coefficients[static_cast<Eigen::Index>(k)];
        }
        j["apc_coefficients"] = coef;
    }
    return j;
}

void write_comparison_table(const std::vector<EstimateResult> &results, std::ostream &out) {
    char line[160];
    std::snprintf(line, sizeof line, "%-8s %10s %10s %10s  %s\n", "method", "estimate", "ci_low",
                  "ci_high", "description");
    out << line;
    for (const auto &r : results) {
        const char *description = "";
        switch (r.method) {
        case Method::M0:
            description = "expected vs observed, no split by diagnosis time";
            break;
        case Method::M1:
            description = "standardised ratio, post-invitation diagnoses";
            break;
        case Method::M2:
            description = "Poisson regression with lag offsets";
            break;
        case Method::M3:
            description = "full maximum likelihood";
            break;
        }
        auto fmt = [](const std::optional<double> &v) {
            char buf[32];
            if (v) {
                std::snprintf(buf, sizeof buf, "%.4f", *v);
            } else {
                std::snprintf(buf, sizeof buf, "-");
            }
            return std::string(buf);
        };
        std::snprintf(line, sizeof line, "%-8s %10.4f %10s %10s  %s\n",
                      std::string(to_string(r.method)).c_str(), r.screening_rate_ratio,
                      fmt(r.ci_low).c_str(), fmt(r.ci_high).c_str(), description);
        out << line;
    }
}

std::vector<TrendRow> mortality_trends(const MortalityTable &table, const ApcFit *fit) {
    std::vector<double> fitted(table.cells.size(), 0.0);
    if (fit) {
        fitted = fit->expected(table.cells);
    }
    std::map<std::pair<int, std::string>, TrendRow> rows;
    auto add = [&](int year, const std::string &series, double py, double obs, double fit_value) {
        auto &r = rows[{year, series}];
        r.year = year;
        r.series = series;
        r.person_years += py;
        r.observed += obs;
        r.fitted += fit_value;
    };
    for (std::size_t i = 0; i < table.cells.size(); ++i) {
        const auto &c = table.cells[i];
        const double f = std::isfinite(fitted[i]) ? fitted[i] : 0.0;
        switch (c.group) {
        case ScreeningGroup::NoScreening:
            add(c.year, "no_screening", c.person_years, c.cases, f);
            break;
        case ScreeningGroup::PostOld:
            add(c.year, "post_old", c.person_years, c.cases, f);
            add(c.year, "post_total", c.person_years, c.cases, f);
            break;
        case ScreeningGroup::PostNew:
            add(c.year, "post_new", c.person_years, c.cases, f);
            add(c.year, "post_total", 0.0, c.cases, f);
            break;
        }
    }
    std::vector<TrendRow> out;
    for (auto &[key, r] : rows) {
        out.push_back(r);
    }
    return out;
}

void write_trends_csv(const std::vector<TrendRow> &rows, std::ostream &out) {
    out << "year,series,person_years,observed,fitted,observed_rate,fitted_rate\n";
    for (const auto &r : rows) {
        out << r.year << ',' << r.series << ',' << csv::format_double(r.person_years) << ','
            << csv::format_double(r.observed) << ',' << csv::format_double(r.fitted) << ','
            << csv::format_double(r.observed_rate()) << ',' << csv::format_double(r.fitted_rate())
            << '\n';
    }
}

void write_trends_svg(const std::vector<TrendRow> &rows, std::ostream &out,
                      const std::string &title) {
    constexpr double W = 720, H = 420, L = 70, R = 150, T = 40, B = 50;
    const std::vector<std::pair<std::string, std::string>> palette = {
        {"no_screening", "#1f77b4"}, {"post_total", "#d62728"},
        {"post_old", "#ff7f0e"},     {"post_new", "#2ca02c"}};

    int ymin = 0, ymax = 1;
    double vmax = 0.0;
    if (!rows.empty()) {
        ymin = ymax = rows.front().year;
    }
    for (const auto &r : rows) {
        ymin = std::min(ymin, r.year);
        ymax = std::max(ymax, r.year);
        vmax = std::max({vmax, r.observed_rate(), r.fitted_rate()});
    }
    if (ymax == ymin) {
        ++ymax;
    }
    if (!(vmax > 0.0)) {
        vmax = 1.0;
    }
    vmax *= 1.05;
    auto x = [&](double year) { return L + (year - ymin) / (ymax - ymin) * (W - L - R); };
    auto y = [&](double v) { return H - B - v / vmax * (H - T - B); };

    char buf[256];
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << L << "\" y=\"24\" font-size=\"15\">" << title << "</text>\n";
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n"
                  "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n",
                  L, H - B, W - R, H - B, L, T, L, H - B);
    out << buf;
    for (int k = 0; k <= 4; ++k) {
        const double v = vmax * k / 4.0;
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%g\" y=\"%g\" text-anchor=\"end\">%.1f</text>\n", L - 6, y(v) + 4,
                      v);
        out << buf;
    }
    const int step = std::max(1, (ymax - ymin) / 6);
    for (int yr = ymin; yr <= ymax; yr += step) {
        std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">%d</text>\n",
                      x(yr), H - B + 18, yr);
        out << buf;
    }
    std::snprintf(buf, sizeof buf,
                  "<text x=\"18\" y=\"%g\" transform=\"rotate(-90 18 %g)\" "
                  "text-anchor=\"middle\">deaths per 100,000 person-years</text>\n",
                  (H - B + T) / 2, (H - B + T) / 2);
    out << buf;

    int legend = 0;
    for (const auto &[series, colour] : palette) {
        std::vector<const TrendRow *> pts;
        for (const auto &r : rows) {
            if (r.series == series && r.person_years > 0.0) {
                pts.push_back(&r);
            }
        }
        if (pts.empty()) {
            continue;
        }
        for (int dashed = 0; dashed < 2; ++dashed) {
            out << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.6\""
                << (dashed ? " stroke-dasharray=\"5,4\"" : "") << " points=\"";
            for (const auto *p : pts) {
                std::snprintf(buf, sizeof buf, "%.2f,%.2f ", x(p->year),
                              y(dashed ? p->fitted_rate() : p->observed_rate()));
                out << buf;
            }
            out << "\"/>\n";
        }
        const double ly = T + 16.0 * legend++;
        std::snprintf(buf, sizeof buf,
                      "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"%s\" "
                      "stroke-width=\"2\"/><text x=\"%g\" y=\"%g\">%s</text>\n",
                      W - R + 10, ly, W - R + 30, ly, colour.c_str(), W - R + 35, ly + 4,
                      series.c_str());
        out << buf;
    }
    out << "</svg>\n";
}

} // namespace refmort
