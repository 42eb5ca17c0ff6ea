#include "mr2/subsets.hpp"

#include "mr2/errors.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

namespace mr2 {

namespace {

void check_range(int k_total, int k_dagger)
{
    if (k_total < 1)
        throw ParameterError("K must be at least 1, got " + std::to_string(k_total));
    if (k_dagger < 1 || k_dagger > k_total)
        throw ParameterError("k-dagger must lie in [1, " + std::to_string(k_total) + "], got " +
                             std::to_string(k_dagger));
}

// Revolving-door list R(n, k): R(n-1, k) followed by reversed R(n-1, k-1)
// with n appended. Starts at {1..k} and ends at {1..k-1, n}.
void revolving_door(int n, int k, bool reversed, IndexTuple& prefix,
                    std::vector<IndexTuple>& out)
{
    if (k == 0) {
        out.push_back(prefix);
        return;
    }
    if (k == n) {
        IndexTuple full(prefix);
        for (int i = 1; i <= n; ++i)
            full.push_back(i);
        out.push_back(std::move(full));
        return;
    }
    auto first = [&] { revolving_door(n - 1, k, reversed, prefix, out); };
    auto second = [&] {
        prefix.push_back(n);
        revolving_door(n - 1, k - 1, !reversed, prefix, out);
        prefix.pop_back();
    };
    if (!reversed) {
        first();
        second();
    } else {
        second();
        first();
    }
}

}  // namespace

std::uint64_t binomial(int n, int k)
{
    if (k < 0 || n < 0 || k > n)
        return 0;
    k = std::min(k, n - k);
    std::uint64_t result = 1;
    for (int i = 1; i <= k; ++i) {
        const auto num = static_cast<std::uint64_t>(n - k + i);
        // result * num / i is always integral; divide first where possible.
        const std::uint64_t g = std::gcd(result, static_cast<std::uint64_t>(i));
        const std::uint64_t r = result / g;
        const std::uint64_t d = static_cast<std::uint64_t>(i) / g;
        const std::uint64_t m = num / d;
        if (r > std::numeric_limits<std::uint64_t>::max() / m)
            return std::numeric_limits<std::uint64_t>::max();
        result = r * m;
    }
    return result;
}

SubsetFamily enumerate_family(int k_total, int k_dagger, std::size_t cap)
{
    check_range(k_total, k_dagger);
    const auto count = binomial(k_total, k_dagger);
    if (count > cap)
        throw CapacityError("binomial(" + std::to_string(k_total) + ", " +
                                std::to_string(k_dagger) + ") = " + std::to_string(count) +
                                " subsets exceeds the cap of " + std::to_string(cap),
                            static_cast<double>(count));

    SubsetFamily fam;
    fam.k_total = k_total;
    fam.k_dagger = k_dagger;
    fam.members.reserve(count);
    IndexTuple prefix;
    prefix.reserve(static_cast<std::size_t>(k_dagger));
    revolving_door(k_total, k_dagger, false, prefix, fam.members);
    for (auto& m : fam.members)
        std::sort(m.begin(), m.end());
    return fam;
}

std::vector<IndexTuple> partial_id_interactions(int k_total, int k_dagger, std::size_t cap)
{
    check_range(k_total, k_dagger);
    const int min_order = k_total - k_dagger + 1;

    std::uint64_t total = 0;
    for (int order = min_order; order <= k_total; ++order) {
        total += binomial(k_total, order);
        if (total > cap)
            throw CapacityError("partial-identification interaction list exceeds the cap of " +
                                    std::to_string(cap),
                                static_cast<double>(total));
    }

    std::vector<IndexTuple> out;
    out.reserve(total);
    for (int order = min_order; order <= k_total; ++order) {
        IndexTuple c(static_cast<std::size_t>(order));
        for (int i = 0; i < order; ++i)
            c[static_cast<std::size_t>(i)] = i + 1;
        while (true) {
            out.push_back(c);
            int i = order - 1;
            while (i >= 0 && c[static_cast<std::size_t>(i)] == k_total - order + i + 1)
                --i;
            if (i < 0)
                break;
            ++c[static_cast<std::size_t>(i)];
            for (int j = i + 1; j < order; ++j)
                c[static_cast<std::size_t>(j)] = c[static_cast<std::size_t>(j - 1)] + 1;
        }
    }
    return out;
}

IndexTuple complement(const IndexTuple& subset, int k_total)
{
    std::vector<bool> in(static_cast<std::size_t>(k_total) + 1, false);
    for (int s : subset) {
        if (s < 1 || s > k_total)
            throw ParameterError("index " + std::to_string(s) + " outside 1.." +
                                 std::to_string(k_total));
        in[static_cast<std::size_t>(s)] = true;
    }
    IndexTuple out;
    for (int s = 1; s <= k_total; ++s)
        if (!in[static_cast<std::size_t>(s)])
            out.push_back(s);
    return out;
}

}  // namespace mr2
