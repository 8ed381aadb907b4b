#pragma once

#include <string>
#include <vector>

namespace ganlab {

struct VerifyOptions {
    /// Mutation hook: computes the margin-cosine reduction with the
    /// discriminator's relative logit sign flipped, which the reduction
    /// property must catch and name. Used to prove the check has teeth.
    bool inject_rmcos_sign_flip = false;
};

struct PropertyResult {
    std::string name;
    bool pass = false;
    std::string detail;  // measured tolerances, case counts, timings
};

struct VerifyReport {
    std::vector<PropertyResult> results;
    bool all_pass = false;
    /// First failing property name, empty when everything passed.
    std::string first_failure;
};

/// Runs the full fast property suite: gradient oracles, the margin-cosine
/// reduction and monotonicity checks, Fréchet closed forms, inception-score
/// bounds, parser and checkpoint round trips, the spectral-norm oracle, and
/// a determinism replay. Designed to finish in seconds.
VerifyReport run_verify(const VerifyOptions& opts = {});

}  // namespace ganlab
