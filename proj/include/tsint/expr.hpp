#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tsint/errors.hpp"

namespace tsint {

using RealFn = std::function<double(double)>;
using RealFn2 = std::function<double(double, double)>;

enum class ExprOp : uint8_t {
    Num, VarT, VarS,
    Add, Sub, Mul, Div, Pow, Neg,
    Exp, Ln, Abs, Sqrt, Min, Max,
};

struct ExprNode {
    ExprOp op;
    double num = 0.0;       // payload for Num
    int32_t a = -1, b = -1; // child indices into the node vector
};

// Parsed arithmetic expression in t (and s for bivariate kernels).
//
// Grammar:
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := '-' factor | atom ('^' factor)?      ('^' right-associative,
//                                                    unary minus binds looser)
//   atom   := number | 't' | 's' | func '(' expr (',' expr)? ')' | '(' expr ')'
//
// Nodes are stored children-first, so the vector is a postorder program and
// evaluation is a single stack pass. Domain violations (ln of a non-positive
// value, division by zero, non-finite results) throw DomainError; evaluation
// never returns a silent NaN.
class ExprFn {
public:
    ExprFn() = default;

    static ExprFn parse(const std::string& src, int arity);

    double eval(double t) const;
    double eval(double t, double s) const;

    int arity() const { return arity_; }
    bool empty() const { return nodes_.empty(); }
    const std::string& source() const { return src_; }

    // Prints the AST; parse(to_string(), arity()) reproduces the same AST.
    std::string to_string() const;

    bool same_ast(const ExprFn& other) const;

    RealFn fn1() const;
    RealFn2 fn2() const;

private:
    std::vector<ExprNode> nodes_;
    int arity_ = 1;
    std::string src_;

    friend class ExprParser;
    std::string print_node(int32_t idx, int parent_prec, bool rhs_of_tighter) const;
};

// Canonical double formatting used everywhere text must be replayable.
std::string format_double(double v);

} // namespace tsint
