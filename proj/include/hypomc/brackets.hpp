#pragma once

#include <vector>

#include "hypomc/model.hpp"

namespace hypomc {

// [A_i, A_j](x) = DA_j(x) A_i(x) - DA_i(x) A_j(x), Jacobians by forward AD.
Vec lie_bracket(const SdeModel& model, int i, int j, const Vec& x);

// Symbolic bracket of two vector fields given componentwise:
// [f,g]_c = sum_k ( f_k d g_c/dx_k - g_k d f_c/dx_k ).
// Used for iterated brackets and as an independent oracle for the AD route.
std::vector<dsl::Expr> symbolic_bracket(const std::vector<dsl::Expr>& f,
                                        const std::vector<dsl::Expr>& g, int n);

struct HormanderResult {
    int rank = 0;
    int depth_achieved = 0;
    std::vector<int> rank_by_depth;  // rank of the span after each bracket level
};

// Spans A_1..A_r, then closes with brackets [A_j, G] (j = 0..r) of the current
// frontier up to max_depth. Rank via singular values above 1e-9 x the largest.
HormanderResult hormander_probe(const SdeModel& model, const Vec& x, int max_depth);

}  // namespace hypomc
