#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "commitlm/commit.hpp"
#include "commitlm/tasks.hpp"

namespace commitlm {

/// Deterministic generator for small test corpora. Commits cycle through all
/// seven languages, share identifier tokens between message and code, and are
/// mostly single-hunk consecutive modifications so every task builder has
/// usable inputs.
struct SyntheticOptions {
    std::size_t count = 200;
    std::uint64_t seed = 1;
    double security_fraction = 0.3;
};

std::vector<LabeledCommit> make_synthetic_commits(const SyntheticOptions& opts = {});

/// Same corpus with the labels dropped.
std::vector<CommitRecord> synthetic_records(const SyntheticOptions& opts = {});

}  // namespace commitlm
