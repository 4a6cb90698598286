#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

namespace nelson {

struct CriterionResult {
    int id{0};
    std::string name;
    bool pass{false};
    /// Set only on a failure whose measured values match the analysed
    /// deviation recorded for this criterion (see README).
    bool known_deviation{false};
    std::string detail;
    double seconds{0};
    nlohmann::json data;
};

struct AcceptanceOptions {
    /// Closed-form criteria only (identities, velocity, T/g, convergence chain).
    bool quick{false};
    std::vector<int> only;  ///< empty runs every criterion
    int threads{0};
    std::uint64_t seed{20241014};
    std::function<void(const CriterionResult&)> on_result;
};

CriterionResult run_criterion(int id, const AcceptanceOptions& opt);
std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& opt);

/// "PASS  7  spectral suite  (41.2 s)  detail"
std::string format_result(const CriterionResult& r);

inline bool all_passed(const std::vector<CriterionResult>& rs) {
    for (const auto& r : rs)
        if (!r.pass) return false;
    return true;
}

/// True when every failure carries known_deviation.
inline bool only_known_deviations(const std::vector<CriterionResult>& rs) {
    for (const auto& r : rs)
        if (!r.pass && !r.known_deviation) return false;
    return true;
}

}  // namespace nelson
