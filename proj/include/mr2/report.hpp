#pragma once

#include "mr2/diagnostics.hpp"
#include "mr2/estimator.hpp"
#include "mr2/montecarlo.hpp"

#include "json.hpp"

#include <string>

namespace mr2 {

/// beta_a, beta_0, se_sandwich, se_homoskedastic, first_stage_F,
/// first_stage_p, n, K, k_dagger, J, method.
nlohmann::ordered_json to_json(const FitResult& fit);

/// ht, p_value, k_ref, k_alt, status; ht and p_value are null when not applicable.
nlohmann::ordered_json to_json(const HausmanResult& h);

/// Scenario echo plus one entry per estimator; unavailable metrics are null.
nlohmann::ordered_json to_json(const McReport& report);

/// Rows |Bias|, √Var, √EVar, Cov95 with one column per estimator.
std::string format_table(const McReport& report);

/// Column heading used in tables ("MR2", "Oracle 2SLS", ...).
std::string display_name(Method m);

}  // namespace mr2
