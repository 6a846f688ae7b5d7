#include "hypomc/expr.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

namespace hypomc::dsl {

namespace {

double ipow(double base, int k) {
    if (k == 0) return 1.0;
    bool invert = k < 0;
    unsigned long e = invert ? -static_cast<long>(k) : k;
    double acc = 1.0, b = base;
    while (e) {
        if (e & 1) acc *= b;
        b *= b;
        e >>= 1;
    }
    if (invert) {
        if (acc == 0.0) throw EvalDomainError("zero raised to a negative power");
        return 1.0 / acc;
    }
    return acc;
}

[[noreturn]] void domain(const char* what) { throw EvalDomainError(what); }

}  // namespace

double Expr::eval(std::span<const double> x, EvalScratch& scratch) const {
    auto& v = scratch.val;
    v.resize(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const ExprNode& n = nodes_[i];
        switch (n.kind) {
            case NodeKind::literal: v[i] = n.value; break;
            case NodeKind::variable: v[i] = x[static_cast<std::size_t>(n.ivalue)]; break;
            case NodeKind::add: v[i] = v[n.a] + v[n.b]; break;
            case NodeKind::sub: v[i] = v[n.a] - v[n.b]; break;
            case NodeKind::mul: v[i] = v[n.a] * v[n.b]; break;
            case NodeKind::div:
                if (v[n.b] == 0.0) domain("division by zero");
                v[i] = v[n.a] / v[n.b];
                break;
            case NodeKind::neg: v[i] = -v[n.a]; break;
            case NodeKind::pow_int: v[i] = ipow(v[n.a], n.ivalue); break;
            case NodeKind::fn_sin: v[i] = std::sin(v[n.a]); break;
            case NodeKind::fn_cos: v[i] = std::cos(v[n.a]); break;
            case NodeKind::fn_exp: v[i] = std::exp(v[n.a]); break;
            case NodeKind::fn_log:
                if (v[n.a] <= 0.0) domain("log of a non-positive value");
                v[i] = std::log(v[n.a]);
                break;
            case NodeKind::fn_sqrt:
                if (v[n.a] < 0.0) domain("sqrt of a negative value");
                v[i] = std::sqrt(v[n.a]);
                break;
            case NodeKind::fn_tanh: v[i] = std::tanh(v[n.a]); break;
        }
    }
    return v.back();
}

double Expr::eval(std::span<const double> x) const {
    EvalScratch scratch;
    return eval(x, scratch);
}

double Expr::eval_grad(std::span<const double> x, std::span<double> grad_out,
                       EvalScratch& scratch) const {
    const std::size_t n = static_cast<std::size_t>(n_vars_);
    auto& v = scratch.val;
    auto& g = scratch.grad;
    v.resize(nodes_.size());
    g.assign(nodes_.size() * n, 0.0);

    auto row = [&](std::size_t i) { return g.data() + i * n; };

    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const ExprNode& nd = nodes_[i];
        double* gi = row(i);
        switch (nd.kind) {
            case NodeKind::literal: v[i] = nd.value; break;
            case NodeKind::variable:
                v[i] = x[static_cast<std::size_t>(nd.ivalue)];
                gi[nd.ivalue] = 1.0;
                break;
            case NodeKind::add: {
                v[i] = v[nd.a] + v[nd.b];
                const double *ga = row(nd.a), *gb = row(nd.b);
                for (std::size_t k = 0; k < n; ++k) gi[k] = ga[k] + gb[k];
                break;
            }
            case NodeKind::sub: {
                v[i] = v[nd.a] - v[nd.b];
                const double *ga = row(nd.a), *gb = row(nd.b);
                for (std::size_t k = 0; k < n; ++k) gi[k] = ga[k] - gb[k];
                break;
            }
            case NodeKind::mul: {
                v[i] = v[nd.a] * v[nd.b];
                const double *ga = row(nd.a), *gb = row(nd.b);
                for (std::size_t k = 0; k < n; ++k)
                    gi[k] = ga[k] * v[nd.b] + v[nd.a] * gb[k];
                break;
            }
            case NodeKind::div: {
                if (v[nd.b] == 0.0) domain("division by zero");
                v[i] = v[nd.a] / v[nd.b];
                const double *ga = row(nd.a), *gb = row(nd.b);
                const double inv = 1.0 / v[nd.b];
                for (std::size_t k = 0; k < n; ++k)
                    gi[k] = (ga[k] - v[i] * gb[k]) * inv;
                break;
            }
            case NodeKind::neg: {
                v[i] = -v[nd.a];
                const double* ga = row(nd.a);
                for (std::size_t k = 0; k < n; ++k) gi[k] = -ga[k];
                break;
            }
            case NodeKind::pow_int: {
                v[i] = ipow(v[nd.a], nd.ivalue);
                const double* ga = row(nd.a);
                const double c = nd.ivalue * ipow(v[nd.a], nd.ivalue - 1);
                for (std::size_t k = 0; k < n; ++k) gi[k] = c * ga[k];
                break;
            }
            case NodeKind::fn_sin: {
                v[i] = std::sin(v[nd.a]);
                const double c = std::cos(v[nd.a]);
                const double* ga = row(nd.a);
                for (std::size_t k = 0; k < n; ++k) gi[k] = c * ga[k];
                break;
            }
            case NodeKind::fn_cos: {
                v[i] = std::cos(v[nd.a]);
                const double c = -std::sin(v[nd.a]);
                const double* ga = row(nd.a);
                for (std::size_t k = 0; k < n; ++k) gi[k] = c * ga[k];
                break;
            }
            case NodeKind::fn_exp: {
                v[i] = std::exp(v[nd.a]);
                const double* ga = row(nd.a);
                for (std::size_t k = 0; k < n; ++k) gi[k] = v[i] * ga[k];
                break;
            }
            case NodeKind::fn_log: {
                if (v[nd.a] <= 0.0) domain("log of a non-positive value");
                v[i] = std::log(v[nd.a]);
                const double c = 1.0 / v[nd.a];
                const double* ga = row(nd.a);
                for (std::size_t k = 0; k < n; ++k) gi[k] = c * ga[k];
                break;
            }
            case NodeKind::fn_sqrt: {
                if (v[nd.a] < 0.0) domain("sqrt of a negative value");
                v[i] = std::sqrt(v[nd.a]);
                if (v[i] == 0.0) domain("sqrt derivative at zero");
                const double c = 0.5 / v[i];
                const double* ga = row(nd.a);
                for (std::size_t k = 0; k < n; ++k) gi[k] = c * ga[k];
                break;
            }
            case NodeKind::fn_tanh: {
                v[i] = std::tanh(v[nd.a]);
                const double c = 1.0 - v[i] * v[i];
                const double* ga = row(nd.a);
                for (std::size_t k = 0; k < n; ++k) gi[k] = c * ga[k];
                break;
            }
        }
    }
    const double* gr = row(nodes_.size() - 1);
    for (std::size_t k = 0; k < n; ++k) grad_out[k] = gr[k];
    return v.back();
}

std::string Expr::to_string() const {
    std::vector<std::string> s(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const ExprNode& n = nodes_[i];
        std::ostringstream os;
        switch (n.kind) {
            case NodeKind::literal: os << n.value; break;
            case NodeKind::variable: os << "x" << (n.ivalue + 1); break;
            case NodeKind::add: os << "(" << s[n.a] << " + " << s[n.b] << ")"; break;
            case NodeKind::sub: os << "(" << s[n.a] << " - " << s[n.b] << ")"; break;
            case NodeKind::mul: os << "(" << s[n.a] << " * " << s[n.b] << ")"; break;
            case NodeKind::div: os << "(" << s[n.a] << " / " << s[n.b] << ")"; break;
            case NodeKind::neg: os << "(-" << s[n.a] << ")"; break;
            case NodeKind::pow_int: os << s[n.a] << "^" << n.ivalue; break;
            case NodeKind::fn_sin: os << "sin(" << s[n.a] << ")"; break;
            case NodeKind::fn_cos: os << "cos(" << s[n.a] << ")"; break;
            case NodeKind::fn_exp: os << "exp(" << s[n.a] << ")"; break;
            case NodeKind::fn_log: os << "log(" << s[n.a] << ")"; break;
            case NodeKind::fn_sqrt: os << "sqrt(" << s[n.a] << ")"; break;
            case NodeKind::fn_tanh: os << "tanh(" << s[n.a] << ")"; break;
        }
        s[i] = os.str();
    }
    return s.empty() ? std::string("0") : s.back();
}

// ---------------------------------------------------------------------------
// Builder

int ExprBuilder::push(ExprNode n) {
    nodes_.push_back(n);
    return static_cast<int>(nodes_.size()) - 1;
}

bool ExprBuilder::is_zero(int id) const {
    return nodes_[id].kind == NodeKind::literal && nodes_[id].value == 0.0;
}

int ExprBuilder::literal(double v) { return push({NodeKind::literal, -1, -1, v, 0}); }

int ExprBuilder::variable(int index0) {
    if (index0 < 0 || index0 >= n_vars_)
        throw ParseError("variable index out of range", 0);
    return push({NodeKind::variable, -1, -1, 0.0, index0});
}

int ExprBuilder::add(int a, int b) {
    if (is_zero(a)) return b;
    if (is_zero(b)) return a;
    return push({NodeKind::add, a, b, 0.0, 0});
}

int ExprBuilder::sub(int a, int b) {
    if (is_zero(b)) return a;
    if (is_zero(a)) return neg(b);
    return push({NodeKind::sub, a, b, 0.0, 0});
}

int ExprBuilder::mul(int a, int b) {
    auto is_one = [&](int id) {
        return nodes_[id].kind == NodeKind::literal && nodes_[id].value == 1.0;
    };
    if (is_zero(a) || is_zero(b)) return literal(0.0);
    if (is_one(a)) return b;
    if (is_one(b)) return a;
    return push({NodeKind::mul, a, b, 0.0, 0});
}

int ExprBuilder::div(int a, int b) {
    if (is_zero(a)) return literal(0.0);
    return push({NodeKind::div, a, b, 0.0, 0});
}

int ExprBuilder::neg(int a) {
    if (is_zero(a)) return a;
    return push({NodeKind::neg, a, -1, 0.0, 0});
}

int ExprBuilder::pow_int(int a, int k) {
    if (k == 0) return literal(1.0);
    if (k == 1) return a;
    ExprNode n{NodeKind::pow_int, a, -1, 0.0, k};
    return push(n);
}

int ExprBuilder::fn(NodeKind f, int a) { return push({f, a, -1, 0.0, 0}); }

int ExprBuilder::append(const Expr& other) {
    const int offset = static_cast<int>(nodes_.size());
    for (ExprNode n : other.nodes()) {
        if (n.a >= 0) n.a += offset;
        if (n.b >= 0) n.b += offset;
        nodes_.push_back(n);
    }
    return static_cast<int>(nodes_.size()) - 1;
}

Expr ExprBuilder::take(int root) {
    // Drop dead nodes and renumber so the root comes last.
    std::vector<int> order;
    std::vector<int> mark(nodes_.size(), -1);
    std::vector<int> stack{root};
    // Collect reachable set, then emit in original index order (children first).
    std::vector<bool> reach(nodes_.size(), false);
    while (!stack.empty()) {
        int id = stack.back();
        stack.pop_back();
        if (reach[id]) continue;
        reach[id] = true;
        if (nodes_[id].a >= 0) stack.push_back(nodes_[id].a);
        if (nodes_[id].b >= 0) stack.push_back(nodes_[id].b);
    }
    std::vector<ExprNode> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (!reach[i]) continue;
        ExprNode n = nodes_[i];
        if (n.a >= 0) n.a = mark[n.a];
        if (n.b >= 0) n.b = mark[n.b];
        mark[i] = static_cast<int>(out.size());
        out.push_back(n);
    }
    // Root is the highest-index reachable node by construction.
    return Expr(std::move(out), n_vars_);
}

// ---------------------------------------------------------------------------
// Parser

namespace {

struct Parser {
    std::string_view src;
    std::size_t pos = 0;
    int n_vars;
    ExprBuilder b;

    explicit Parser(std::string_view s, int n) : src(s), n_vars(n), b(n) {}

    void skip_ws() {
        while (pos < src.size() && std::isspace(static_cast<unsigned char>(src[pos]))) ++pos;
    }

    bool eat(char c) {
        skip_ws();
        if (pos < src.size() && src[pos] == c) {
            ++pos;
            return true;
        }
        return false;
    }

    char peek() {
        skip_ws();
        return pos < src.size() ? src[pos] : '\0';
    }

    [[noreturn]] void fail(const std::string& msg) { throw ParseError(msg, pos); }

    int expression() {
        int lhs = term();
        while (true) {
            if (eat('+'))
                lhs = b.add(lhs, term());
            else if (eat('-'))
                lhs = b.sub(lhs, term());
            else
                return lhs;
        }
    }

    int term() {
        int lhs = unary();
        while (true) {
            if (eat('*'))
                lhs = b.mul(lhs, unary());
            else if (eat('/'))
                lhs = b.div(lhs, unary());
            else
                return lhs;
        }
    }

    int unary() {
        if (eat('-')) return b.neg(unary());
        return power();
    }

    int power() {
        int base = primary();
        if (eat('^')) {
            skip_ws();
            bool negexp = eat('-');
            std::size_t start = pos;
            while (pos < src.size() && std::isdigit(static_cast<unsigned char>(src[pos]))) ++pos;
            if (pos == start) fail("expected integer exponent after '^'");
            int k = 0;
            std::from_chars(src.data() + start, src.data() + pos, k);
            return b.pow_int(base, negexp ? -k : k);
        }
        return base;
    }

    int primary() {
        skip_ws();
        if (pos >= src.size()) fail("unexpected end of expression");
        char c = src[pos];
        if (c == '(') {
            ++pos;
            int e = expression();
            if (!eat(')')) fail("expected ')'");
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c))) return identifier();
        fail(std::string("unexpected character '") + c + "'");
    }

    int number() {
        const char* begin = src.data() + pos;
        const char* end = src.data() + src.size();
        double v = 0.0;
        auto res = std::from_chars(begin, end, v);
        if (res.ec != std::errc{}) fail("malformed number");
        pos += static_cast<std::size_t>(res.ptr - begin);
        return b.literal(v);
    }

    int identifier() {
        std::size_t start = pos;
        while (pos < src.size() &&
               (std::isalnum(static_cast<unsigned char>(src[pos])) || src[pos] == '_'))
            ++pos;
        std::string_view name = src.substr(start, pos - start);
        if (name.size() >= 2 && name[0] == 'x' &&
            std::isdigit(static_cast<unsigned char>(name[1]))) {
            int idx = 0;
            auto res = std::from_chars(name.data() + 1, name.data() + name.size(), idx);
            if (res.ec != std::errc{} || res.ptr != name.data() + name.size()) {
                pos = start;
                fail("malformed variable name '" + std::string(name) + "'");
            }
            if (idx < 1 || idx > n_vars) {
                pos = start;
                fail("variable x" + std::to_string(idx) + " out of range for dimension " +
                     std::to_string(n_vars));
            }
            return b.variable(idx - 1);
        }
        NodeKind f;
        if (name == "sin") f = NodeKind::fn_sin;
        else if (name == "cos") f = NodeKind::fn_cos;
        else if (name == "exp") f = NodeKind::fn_exp;
        else if (name == "log") f = NodeKind::fn_log;
        else if (name == "sqrt") f = NodeKind::fn_sqrt;
        else if (name == "tanh") f = NodeKind::fn_tanh;
        else {
            pos = start;
            fail("unknown identifier '" + std::string(name) + "'");
        }
        if (!eat('(')) fail("expected '(' after function name");
        int arg = expression();
        if (!eat(')')) fail("expected ')'");
        return b.fn(f, arg);
    }
};

}  // namespace

Expr parse_field_expr(std::string_view source, int n_vars) {
    if (source.empty()) throw ParseError("empty expression", 0);
    Parser p(source, n_vars);
    int root = p.expression();
    p.skip_ws();
    if (p.pos != source.size()) p.fail("trailing input");
    return p.b.take(root);
}

// ---------------------------------------------------------------------------
// Symbolic derivative

namespace {

int diff_node(const Expr& e, int id, int k, ExprBuilder& b, std::vector<int>& memo_val,
              std::vector<int>& memo_der);

// Copy of the original subtree rooted at id into the builder.
int copy_node(const Expr& e, int id, ExprBuilder& b, std::vector<int>& memo_val) {
    if (memo_val[id] >= 0) return memo_val[id];
    const ExprNode& n = e.nodes()[id];
    int a = n.a >= 0 ? copy_node(e, n.a, b, memo_val) : -1;
    int bb = n.b >= 0 ? copy_node(e, n.b, b, memo_val) : -1;
    int out;
    switch (n.kind) {
        case NodeKind::literal: out = b.literal(n.value); break;
        case NodeKind::variable: out = b.variable(n.ivalue); break;
        case NodeKind::add: out = b.add(a, bb); break;
        case NodeKind::sub: out = b.sub(a, bb); break;
        case NodeKind::mul: out = b.mul(a, bb); break;
        case NodeKind::div: out = b.div(a, bb); break;
        case NodeKind::neg: out = b.neg(a); break;
        case NodeKind::pow_int: out = b.pow_int(a, n.ivalue); break;
        default: out = b.fn(n.kind, a); break;
    }
    memo_val[id] = out;
    return out;
}

int diff_node(const Expr& e, int id, int k, ExprBuilder& b, std::vector<int>& memo_val,
              std::vector<int>& memo_der) {
    if (memo_der[id] >= 0) return memo_der[id];
    const ExprNode& n = e.nodes()[id];
    auto val = [&](int cid) { return copy_node(e, cid, b, memo_val); };
    auto der = [&](int cid) { return diff_node(e, cid, k, b, memo_val, memo_der); };
    int out;
    switch (n.kind) {
        case NodeKind::literal: out = b.literal(0.0); break;
        case NodeKind::variable: out = b.literal(n.ivalue == k ? 1.0 : 0.0); break;
        case NodeKind::add: out = b.add(der(n.a), der(n.b)); break;
        case NodeKind::sub: out = b.sub(der(n.a), der(n.b)); break;
        case NodeKind::mul:
            out = b.add(b.mul(der(n.a), val(n.b)), b.mul(val(n.a), der(n.b)));
            break;
        case NodeKind::div:
            // (u/v)' = u'/v - u v'/v^2
            out = b.sub(b.div(der(n.a), val(n.b)),
                        b.div(b.mul(val(n.a), der(n.b)), b.pow_int(val(n.b), 2)));
            break;
        case NodeKind::neg: out = b.neg(der(n.a)); break;
        case NodeKind::pow_int:
            out = b.mul(b.mul(b.literal(n.ivalue), b.pow_int(val(n.a), n.ivalue - 1)),
                        der(n.a));
            break;
        case NodeKind::fn_sin: out = b.mul(b.fn(NodeKind::fn_cos, val(n.a)), der(n.a)); break;
        case NodeKind::fn_cos:
            out = b.neg(b.mul(b.fn(NodeKind::fn_sin, val(n.a)), der(n.a)));
            break;
        case NodeKind::fn_exp: out = b.mul(b.fn(NodeKind::fn_exp, val(n.a)), der(n.a)); break;
        case NodeKind::fn_log: out = b.div(der(n.a), val(n.a)); break;
        case NodeKind::fn_sqrt:
            out = b.div(der(n.a), b.mul(b.literal(2.0), b.fn(NodeKind::fn_sqrt, val(n.a))));
            break;
        case NodeKind::fn_tanh:
            out = b.mul(b.sub(b.literal(1.0), b.pow_int(b.fn(NodeKind::fn_tanh, val(n.a)), 2)),
                        der(n.a));
            break;
        default: out = b.literal(0.0); break;
    }
    memo_der[id] = out;
    return out;
}

}  // namespace

Expr derivative(const Expr& e, int k) {
    ExprBuilder b(e.n_vars());
    std::vector<int> memo_val(e.nodes().size(), -1), memo_der(e.nodes().size(), -1);
    int root = diff_node(e, static_cast<int>(e.nodes().size()) - 1, k, b, memo_val, memo_der);
    return b.take(root);
}

}  // namespace hypomc::dsl
