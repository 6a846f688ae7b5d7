#include "hypomc/brackets.hpp"

#include <Eigen/SVD>

namespace hypomc {

Vec lie_bracket(const SdeModel& model, int i, int j, const Vec& x) {
    dsl::EvalScratch scratch;
    Vec fi, fj;
    Mat Di, Dj;
    model.eval_field(i, x, fi, scratch);
    model.eval_field(j, x, fj, scratch);
    model.jacobian_field(i, x, Di, scratch);
    model.jacobian_field(j, x, Dj, scratch);
    return Dj * fi - Di * fj;
}

std::vector<dsl::Expr> symbolic_bracket(const std::vector<dsl::Expr>& f,
                                        const std::vector<dsl::Expr>& g, int n) {
    std::vector<dsl::Expr> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int c = 0; c < n; ++c) {
        dsl::ExprBuilder b(n);
        int acc = b.literal(0.0);
        for (int k = 0; k < n; ++k) {
            dsl::Expr dgc = dsl::derivative(g[static_cast<std::size_t>(c)], k);
            dsl::Expr dfc = dsl::derivative(f[static_cast<std::size_t>(c)], k);
            int t1 = b.mul(b.append(f[static_cast<std::size_t>(k)]), b.append(dgc));
            int t2 = b.mul(b.append(g[static_cast<std::size_t>(k)]), b.append(dfc));
            acc = b.add(acc, b.sub(t1, t2));
        }
        out.push_back(b.take(acc));
    }
    return out;
}

HormanderResult hormander_probe(const SdeModel& model, const Vec& x, int max_depth) {
    if (max_depth < 0) throw std::invalid_argument("max_depth must be >= 0");

    dsl::EvalScratch scratch;
    std::span<const double> xs(x.data(), static_cast<std::size_t>(model.n));

    auto eval_components = [&](const std::vector<dsl::Expr>& f) {
        Vec v(model.n);
        for (int c = 0; c < model.n; ++c)
            v[c] = f[static_cast<std::size_t>(c)].eval(xs, scratch);
        return v;
    };

    auto rank_of = [&](const std::vector<Vec>& cols) {
        if (cols.empty()) return 0;
        Mat m(model.n, static_cast<int>(cols.size()));
        for (int c = 0; c < m.cols(); ++c) m.col(c) = cols[static_cast<std::size_t>(c)];
        Eigen::JacobiSVD<Mat> svd(m);
        const auto& sv = svd.singularValues();
        if (sv.size() == 0 || sv[0] == 0.0) return 0;
        const double tol = 1e-9 * sv[0];
        int rank = 0;
        for (int i = 0; i < sv.size(); ++i)
            if (sv[i] > tol) ++rank;
        return rank;
    };

    HormanderResult res;
    std::vector<Vec> spanning;
    std::vector<std::vector<dsl::Expr>> frontier;
    for (int i = 1; i <= model.r; ++i) {
        frontier.push_back(model.field(i));
        spanning.push_back(eval_components(model.field(i)));
    }
    res.rank_by_depth.push_back(rank_of(spanning));

    for (int depth = 1; depth <= max_depth; ++depth) {
        if (res.rank_by_depth.back() >= model.n) break;
        std::vector<std::vector<dsl::Expr>> next;
        for (const auto& g : frontier) {
            for (int j = 0; j <= model.r; ++j) {
                auto br = symbolic_bracket(model.field(j), g, model.n);
                spanning.push_back(eval_components(br));
                next.push_back(std::move(br));
            }
        }
        frontier = std::move(next);
        res.rank_by_depth.push_back(rank_of(spanning));
    }

    res.rank = res.rank_by_depth.back();
    // Smallest depth at which the rank reached its final value.
    res.depth_achieved = 0;
    for (int d = static_cast<int>(res.rank_by_depth.size()) - 1; d >= 0; --d) {
        if (res.rank_by_depth[static_cast<std::size_t>(d)] == res.rank)
            res.depth_achieved = d;
        else
            break;
    }
    return res;
}

}  // namespace hypomc
