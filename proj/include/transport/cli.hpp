#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "transport/estimators.hpp"

namespace transport {

/// Exit codes of the command-line front end.
enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitUsage = 2 };

/// Runs `transport_cli` with `args` (program name excluded).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/**
 * Learner configuration document. Each key names a nuisance (treatment,
 * outcome, cate, cate_given_z, cate_collab, selection, pseudo_given_z, selection_given_cate,
 * cate_given_selection) and maps to a learner object, a list of learner
 * objects, or {"candidates": [...], "selection_folds": J, "seed": s};
 * "selector" takes a single adaptive-lasso learner object.
 */
NuisanceLearners parse_learner_config(const std::string& json_text);

}  // namespace transport
