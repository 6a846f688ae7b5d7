#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hypomc::dsl {

// Closed-form scalar expressions over variables x1..xn.
// Grammar (EBNF, also documented in the README):
//
//   expression := term { ("+" | "-") term }
//   term       := unary { ("*" | "/") unary }
//   unary      := "-" unary | power
//   power      := primary [ "^" [ "-" ] integer ]
//   primary    := number | variable | function "(" expression ")" | "(" expression ")"
//   variable   := "x" integer            (1-based, bounded by the declared dimension)
//   function   := "sin" | "cos" | "exp" | "log" | "sqrt" | "tanh"
//
// Expressions are immutable after construction and reentrant to evaluate.

enum class NodeKind : std::uint8_t {
    literal,
    variable,
    add,
    sub,
    mul,
    div,
    neg,
    pow_int,
    fn_sin,
    fn_cos,
    fn_exp,
    fn_log,
    fn_sqrt,
    fn_tanh,
};

struct ExprNode {
    NodeKind kind;
    int a = -1;          // child index
    int b = -1;          // second child index
    double value = 0.0;  // literal value
    int ivalue = 0;      // variable index (0-based) or integer exponent
};

class ParseError : public std::runtime_error {
public:
    ParseError(std::string msg, std::size_t position)
        : std::runtime_error(std::move(msg)), pos(position) {}
    std::size_t pos;
};

class EvalDomainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Reusable buffers so hot loops evaluate without per-call allocation.
struct EvalScratch {
    std::vector<double> val;
    std::vector<double> grad;      // nodes x n, row-major
    std::vector<double> grad_out;  // spare gradient slot for callers
};

class Expr {
public:
    Expr() = default;
    Expr(std::vector<ExprNode> nodes, int n_vars)
        : nodes_(std::move(nodes)), n_vars_(n_vars) {}

    int n_vars() const { return n_vars_; }
    bool empty() const { return nodes_.empty(); }
    const std::vector<ExprNode>& nodes() const { return nodes_; }

    // Children always precede parents, so one forward sweep evaluates the tree.
    double eval(std::span<const double> x, EvalScratch& scratch) const;
    double eval(std::span<const double> x) const;

    // Value plus gradient via forward-mode dual sweep. grad_out has length n_vars.
    double eval_grad(std::span<const double> x, std::span<double> grad_out,
                     EvalScratch& scratch) const;

    // True when the expression is literally the constant `c` (single node).
    bool is_literal(double c) const {
        return nodes_.size() == 1 && nodes_[0].kind == NodeKind::literal &&
               nodes_[0].value == c;
    }

    std::string to_string() const;

private:
    std::vector<ExprNode> nodes_;
    int n_vars_ = 0;
};

// Incremental construction with zero/one folding on + - * so symbolic
// derivatives of sparse fields stay small. This is structural folding only,
// not a simplification pass.
class ExprBuilder {
public:
    explicit ExprBuilder(int n_vars) : n_vars_(n_vars) {}

    int literal(double v);
    int variable(int index0);  // 0-based
    int add(int a, int b);
    int sub(int a, int b);
    int mul(int a, int b);
    int div(int a, int b);
    int neg(int a);
    int pow_int(int a, int k);
    int fn(NodeKind f, int a);
    int append(const Expr& other);  // splice another tree, returns its new root

    bool is_zero(int id) const;
    Expr take(int root);

private:
    int push(ExprNode n);
    std::vector<ExprNode> nodes_;
    int n_vars_;
};

Expr parse_field_expr(std::string_view source, int n_vars);

// d(expr)/dx_k as a new expression (unsimplified beyond structural folding).
Expr derivative(const Expr& e, int k);

}  // namespace hypomc::dsl
