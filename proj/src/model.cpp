#include "hypomc/model.hpp"

namespace hypomc {

void SdeModel::eval_field(int i, const Vec& x, Vec& out, dsl::EvalScratch& scratch) const {
    const auto& f = field(i);
    out.resize(n);
    std::span<const double> xs(x.data(), static_cast<std::size_t>(n));
    for (int c = 0; c < n; ++c) {
        try {
            out[c] = f[static_cast<std::size_t>(c)].eval(xs, scratch);
        } catch (const dsl::EvalDomainError& e) {
            throw FieldDomainError(i, c, e.what());
        }
    }
}

Vec SdeModel::eval_field(int i, const Vec& x) const {
    dsl::EvalScratch scratch;
    Vec out;
    eval_field(i, x, out, scratch);
    return out;
}

void SdeModel::jacobian_field(int i, const Vec& x, Mat& out, dsl::EvalScratch& scratch) const {
    const auto& f = field(i);
    out.resize(n, n);
    std::span<const double> xs(x.data(), static_cast<std::size_t>(n));
    scratch.grad_out.resize(static_cast<std::size_t>(n));
    for (int c = 0; c < n; ++c) {
        try {
            f[static_cast<std::size_t>(c)].eval_grad(xs, scratch.grad_out, scratch);
        } catch (const dsl::EvalDomainError& e) {
            throw FieldDomainError(i, c, e.what());
        }
        for (int k = 0; k < n; ++k) out(c, k) = scratch.grad_out[static_cast<std::size_t>(k)];
    }
}

Mat SdeModel::jacobian_field(int i, const Vec& x) const {
    dsl::EvalScratch scratch;
    Mat out;
    jacobian_field(i, x, out, scratch);
    return out;
}

void SdeModel::diffusion_matrix(const Vec& x, Mat& out, dsl::EvalScratch& scratch) const {
    out.resize(n, r);
    std::span<const double> xs(x.data(), static_cast<std::size_t>(n));
    for (int i = 0; i < r; ++i) {
        const auto& f = diffusion[static_cast<std::size_t>(i)];
        for (int c = 0; c < n; ++c) {
            try {
                out(c, i) = f[static_cast<std::size_t>(c)].eval(xs, scratch);
            } catch (const dsl::EvalDomainError& e) {
                throw FieldDomainError(i + 1, c, e.what());
            }
        }
    }
}

bool SdeModel::drift_is_zero() const {
    for (const auto& e : drift)
        if (!e.is_literal(0.0)) return false;
    return true;
}

void SdeModel::validate() const {
    if (n <= 0) throw std::invalid_argument("model dimension must be positive");
    if (r <= 0) throw std::invalid_argument("noise dimension must be positive");
    if (static_cast<int>(drift.size()) != n)
        throw std::invalid_argument("drift must have n components");
    if (static_cast<int>(diffusion.size()) != r)
        throw std::invalid_argument("expected r diffusion fields");
    for (const auto& f : diffusion)
        if (static_cast<int>(f.size()) != n)
            throw std::invalid_argument("each diffusion field must have n components");
}

SdeModel make_model(std::string name, int n, int r,
                    const std::vector<std::string>& drift_src,
                    const std::vector<std::vector<std::string>>& diffusion_src) {
    SdeModel m;
    m.name = std::move(name);
    m.n = n;
    m.r = r;
    for (const auto& s : drift_src) m.drift.push_back(dsl::parse_field_expr(s, n));
    for (const auto& fld : diffusion_src) {
        std::vector<dsl::Expr> comps;
        for (const auto& s : fld) comps.push_back(dsl::parse_field_expr(s, n));
        m.diffusion.push_back(std::move(comps));
    }
    m.validate();
    return m;
}

}  // namespace hypomc
