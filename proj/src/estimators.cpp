#include "refmort/estimators.hpp"

#include "refmort/errors.hpp"

#include <algorithm>
#include <cmath>

namespace refmort {

std::string_view to_string(Method method) {
    switch (method) {
    case Method::M0:
        return "M0";
    case Method::M1:
        return "M1";
    case Method::M2:
        return "M2";
    case Method::M3:
        return "M3";
    }
    return "M2";
}

Method parse_method(std::string_view text) {
    if (text == "0" || text == "M0") {
        return Method::M0;
    }
    if (text == "1" || text == "M1" || text == "I") {
        return Method::M1;
    }
    if (text == "2" || text == "M2" || text == "II") {
        return Method::M2;
    }
    if (text == "3" || text == "M3" || text == "III") {
        return Method::M3;
    }
    throw ConfigError("unknown method '" + std::string(text) + "' (expected 0, 1, 2 or 3)");
}

namespace {

struct PreScreeningFit {
    std::shared_ptr<const ApcFit> fit;
    std::vector<MortalityCell> screened; ///< PostNew cells, one per screened stratum
    double observed_old = 0.0;
    double observed_new = 0.0;
    Diagnostics diagnostics;
};

void require_converged(const GlmFit &glm, const char *what) {
    if (!glm.converged) {
        throw NonConvergenceError(std::string(what) + ": Poisson fit did not converge in " +
                                  std::to_string(glm.iterations) + " iterations");
    }
}

void record_fit(Diagnostics &d, const GlmFit &glm, std::size_t rows) {
    d.iterations = glm.iterations;
    d.converged = glm.converged;
    d.log_likelihood = glm.log_likelihood;
    d.rows_used = rows;
    d.aliased = glm.aliased;
    d.values["deviance"] = glm.deviance;
    d.values["final_step_norm"] = glm.step_norm;
}

// Step shared by M0 and M1: APC-region fit on strata without screening history.
PreScreeningFit fit_pre_screening(const MortalityTable &table, const EstimatorOptions &options,
                                  const char *what) {
    PreScreeningFit out;
    std::vector<MortalityCell> pre;
    double screened_py = 0.0;
    for (const auto &c : table.cells) {
        switch (c.group) {
        case ScreeningGroup::NoScreening:
            pre.push_back(c);
            break;
        case ScreeningGroup::PostOld:
            out.observed_old += c.cases;
            break;
        case ScreeningGroup::PostNew:
            out.observed_new += c.cases;
            out.screened.push_back(c);
            screened_py += c.person_years;
            break;
        }
    }
    if (out.screened.empty()) {
        throw InputError(std::string(what) + ": table has no screened strata");
    }
    if (!(screened_py > 0.0)) {
        throw InputError(std::string(what) + ": screened strata have zero observation time");
    }
    const auto rows = usable_rows(pre);
    if (rows.cells.empty()) {
        throw InputError(std::string(what) + ": table has no strata without screening history");
    }
    auto fit = std::make_shared<ApcFit>(
        fit_apc(rows.cells, false, options.glm, options.spline_df));
    require_converged(fit->glm, what);
    record_fit(out.diagnostics, fit->glm, rows.cells.size());
    out.diagnostics.rows_excluded = rows.excluded_zero_person_years;
    if (rows.excluded_zero_person_years > 0) {
        out.diagnostics.warnings.push_back(std::to_string(rows.excluded_zero_person_years) +
                                           " cells with zero person-years excluded from the fit");
    }
    out.fit = std::move(fit);
    return out;
}

EstimateResult make_result(Method method, double ratio) {
    if (!(ratio > 0.0) || !std::isfinite(ratio)) {
        throw EstimationError(std::string(to_string(method)) +
                              ": no deaths observed in the screened strata, so the ratio is " +
                              std::to_string(ratio) + " and its log is undefined");
    }
    EstimateResult r;
    r.method = method;
    r.screening_rate_ratio = ratio;
    r.log_effect = std::log(ratio);
    return r;
}

} // namespace

EstimateResult estimate_method0(const MortalityTable &table, const EstimatorOptions &options) {
    auto pre = fit_pre_screening(table, options, "method 0");
    const auto expected = pre.fit->expected_without_screening(pre.screened);
    double predicted = 0.0;
    for (double e : expected) {
        predicted += e;
    }
    if (!(predicted > 0.0)) {
        throw EstimationError("method 0: predicted post-invitation deaths are zero");
    }
    const double observed = pre.observed_old + pre.observed_new;
    auto result = make_result(Method::M0, observed / predicted);
    result.diagnostics = std::move(pre.diagnostics);
    result.diagnostics.values["observed"] = observed;
    result.diagnostics.values["expected"] = predicted;
    result.model = std::move(pre.fit);
    return result;
}

EstimateResult estimate_method1(const MortalityTable &table, const LagSurvival &lag,
                                const EstimatorOptions &options) {
    auto pre = fit_pre_screening(table, options, "method 1");
    const auto expected = pre.fit->expected_without_screening(pre.screened);
    double mpost_hat = 0.0;
    for (std::size_t i = 0; i < pre.screened.size(); ++i) {
        const auto &c = pre.screened[i];
        const double rho = lag.at_age(c.age(), delta_months(c));
        mpost_hat += expected[i] * (1.0 - rho);
    }
    if (!(mpost_hat > 0.0)) {
        throw EstimationError("method 1: expected post-invitation-diagnosed deaths are zero");
    }
    auto result = make_result(Method::M1, pre.observed_new / mpost_hat);
    result.diagnostics = std::move(pre.diagnostics);
    result.diagnostics.values["observed"] = pre.observed_new;
    result.diagnostics.values["expected"] = mpost_hat;
    result.model = std::move(pre.fit);
    return result;
}

EstimateResult estimate_method2(const MortalityTable &table, const EstimatorOptions &options) {
    const auto rows = usable_rows(table.cells);
    const bool any_screened = std::any_of(rows.cells.begin(), rows.cells.end(),
                                          [](const auto &c) { return c.scr_indicator == 1; });
    if (!any_screened) {
        throw InputError("method 2: no usable post_new cells with scr_indicator = 1; the "
                         "screening effect needs screened data");
    }
    const bool any_deaths = std::any_of(rows.cells.begin(), rows.cells.end(), [](const auto &c) {
        return c.scr_indicator == 1 && c.cases > 0.0;
    });
    if (!any_deaths) {
        throw EstimationError("method 2: no deaths in the screened post-invitation cells; the "
                              "screening coefficient has no finite maximum");
    }
    auto fit = std::make_shared<ApcFit>(fit_apc(rows.cells, true, options.glm, options.spline_df));
    require_converged(fit->glm, "method 2");
    const auto coef = fit->glm.coefficient(kScreeningLabel);
    if (!coef) {
        throw EstimationError("method 2: screening indicator is aliased with the APC terms");
    }
    auto result = make_result(Method::M2, std::exp(*coef));
    result.log_effect = *coef;
    record_fit(result.diagnostics, fit->glm, rows.cells.size());
    result.diagnostics.rows_excluded =
        rows.excluded_zero_person_years + rows.excluded_zero_prop_target;
    result.diagnostics.values["log_effect_se"] = *fit->glm.standard_error(kScreeningLabel);
    if (rows.excluded_zero_person_years > 0) {
        result.diagnostics.warnings.push_back(std::to_string(rows.excluded_zero_person_years) +
                                              " cells with zero person-years excluded");
    }
    if (rows.excluded_zero_prop_target > 0) {
        result.diagnostics.warnings.push_back(std::to_string(rows.excluded_zero_prop_target) +
                                              " cells with prop_target 0 excluded");
    }
    result.model = std::move(fit);
    return result;
}

EstimateResult run_estimator(Method method, const MortalityTable &table, const LagHistogram &hist,
                             const EstimatorOptions &options) {
    switch (method) {
    case Method::M0:
        return estimate_method0(table, options);
    case Method::M1:
        return estimate_method1(table, estimate_lag_survival(hist), options);
    case Method::M2:
        return estimate_method2(table, options);
    case Method::M3:
        return estimate_method3(table, hist, estimate_method2(table, options), options);
    }
    throw ConfigError("unknown method");
}

} // namespace refmort
