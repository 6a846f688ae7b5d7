#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "hypomc/expr.hpp"
#include "hypomc/linalg.hpp"

namespace hypomc {

class FieldDomainError : public std::runtime_error {
public:
    FieldDomainError(int field, int component, const std::string& what)
        : std::runtime_error("field " + std::to_string(field) + " component " +
                             std::to_string(component + 1) + ": " + what),
          field_index(field),
          component_index(component) {}
    int field_index;
    int component_index;
};

// Stratonovich system  dX = A(X) dZ + A_0(X) dt  with A_i the columns of A.
// Field index 0 refers to the drift A_0, indices 1..r to the diffusion fields.
// Immutable after construction; evaluation is reentrant.
struct SdeModel {
    int n = 0;
    int r = 0;
    std::string name;
    std::vector<dsl::Expr> drift;                    // n components
    std::vector<std::vector<dsl::Expr>> diffusion;   // r fields, n components each

    const std::vector<dsl::Expr>& field(int i) const {
        return i == 0 ? drift : diffusion.at(static_cast<std::size_t>(i - 1));
    }

    // A_i(x) into `out` (length n).
    void eval_field(int i, const Vec& x, Vec& out, dsl::EvalScratch& scratch) const;
    Vec eval_field(int i, const Vec& x) const;

    // Entry (j,k) of the result is d(A_i)_j / dx_k, by forward-mode AD.
    void jacobian_field(int i, const Vec& x, Mat& out, dsl::EvalScratch& scratch) const;
    Mat jacobian_field(int i, const Vec& x) const;

    // A(x) as the n x r matrix whose columns are A_1..A_r.
    void diffusion_matrix(const Vec& x, Mat& out, dsl::EvalScratch& scratch) const;

    bool drift_is_zero() const;
    void validate() const;  // throws std::invalid_argument on structural problems
};

SdeModel make_model(std::string name, int n, int r,
                    const std::vector<std::string>& drift_src,
                    const std::vector<std::vector<std::string>>& diffusion_src);

}  // namespace hypomc
