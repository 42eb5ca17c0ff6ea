#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace mr2 {

/// Strictly increasing, 1-based instrument indices.
using IndexTuple = std::vector<int>;

inline constexpr std::size_t kDefaultFamilyCap = 1'000'000;

/// All k-dagger-element subsets of {1..K}, in revolving-door order: each
/// member differs from its predecessor by exchanging exactly one element.
struct SubsetFamily {
    int k_total = 0;
    int k_dagger = 0;
    std::vector<IndexTuple> members;

    std::size_t size() const noexcept { return members.size(); }
};

/// Exact binomial coefficient; saturates at UINT64_MAX on overflow.
std::uint64_t binomial(int n, int k);

SubsetFamily enumerate_family(int k_total, int k_dagger,
                              std::size_t cap = kDefaultFamilyCap);

/// Every subset of {1..K} of cardinality at least K - k_dagger + 1, i.e. the
/// interactions that satisfy the exclusion restriction whenever k_dagger
/// instruments are valid. Ordered by (cardinality, lexicographic).
std::vector<IndexTuple> partial_id_interactions(int k_total, int k_dagger,
                                                std::size_t cap = kDefaultFamilyCap);

/// Sorted indices of {1..K} not in `subset`.
IndexTuple complement(const IndexTuple& subset, int k_total);

}  // namespace mr2
