#include "tsint/expr.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>

namespace tsint {

const char* to_string(ErrKind k) {
    switch (k) {
        case ErrKind::PointNotInScale: return "PointNotInScale";
        case ErrKind::EndpointNotInScale: return "EndpointNotInScale";
        case ErrKind::EmptyRestriction: return "EmptyRestriction";
        case ErrKind::MismatchedEndpoints: return "MismatchedEndpoints";
        case ErrKind::InvalidScale: return "InvalidScale";
        case ErrKind::SyntaxError: return "SyntaxError";
        case ErrKind::ArityError: return "ArityError";
        case ErrKind::DomainError: return "DomainError";
        case ErrKind::UnknownConvexFn: return "UnknownConvexFn";
        case ErrKind::NonMonotoneIntegrator: return "NonMonotoneIntegrator";
        case ErrKind::NoConvergence: return "NoConvergence";
        case ErrKind::NonConvergent: return "NonConvergent";
        case ErrKind::SelectionOutOfCell: return "SelectionOutOfCell";
        case ErrKind::PreconditionViolated: return "PreconditionViolated";
        case ErrKind::OrderingViolated: return "OrderingViolated";
        case ErrKind::GeneratorExhausted: return "GeneratorExhausted";
        case ErrKind::InvalidArgument: return "InvalidArgument";
    }
    return "Error";
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

struct FuncInfo {
    const char* name;
    ExprOp op;
    int args;
};

constexpr FuncInfo kFuncs[] = {
    {"exp", ExprOp::Exp, 1},  {"ln", ExprOp::Ln, 1},   {"abs", ExprOp::Abs, 1},
    {"sqrt", ExprOp::Sqrt, 1}, {"min", ExprOp::Min, 2}, {"max", ExprOp::Max, 2},
};

} // namespace

class ExprParser {
public:
    ExprParser(const std::string& src, int arity, ExprFn& out)
        : src_(src), arity_(arity), out_(out) {}

    void run() {
        skip_ws();
        int32_t root = parse_expr(0);
        skip_ws();
        if (pos_ != src_.size())
            err("unexpected trailing input");
        (void)root; // root is the last node by construction
        if (out_.nodes_.empty()) err("empty expression");
    }

private:
    const std::string& src_;
    std::size_t pos_ = 0;
    int arity_;
    ExprFn& out_;

    [[noreturn]] void err(const std::string& msg, std::size_t at = SIZE_MAX) {
        std::size_t col = (at == SIZE_MAX ? pos_ : at) + 1;
        throw ParseError(ErrKind::SyntaxError, msg, col);
    }

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    bool eat(char c) {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == c) { ++pos_; return true; }
        return false;
    }

    // Accepts ASCII '-' and the UTF-8 minus sign U+2212.
    bool eat_minus() {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == '-') { ++pos_; return true; }
        if (pos_ + 2 < src_.size() && (unsigned char)src_[pos_] == 0xE2 &&
            (unsigned char)src_[pos_ + 1] == 0x88 && (unsigned char)src_[pos_ + 2] == 0x92) {
            pos_ += 3;
            return true;
        }
        return false;
    }

    int32_t push(ExprNode n) {
        out_.nodes_.push_back(n);
        return static_cast<int32_t>(out_.nodes_.size()) - 1;
    }

    int32_t parse_expr(int depth) {
        if (depth > 200) err("expression too deeply nested");
        int32_t lhs = parse_term(depth + 1);
        for (;;) {
            if (eat('+')) {
                int32_t rhs = parse_term(depth + 1);
                lhs = push({ExprOp::Add, 0, lhs, rhs});
            } else if (eat_minus()) {
                int32_t rhs = parse_term(depth + 1);
                lhs = push({ExprOp::Sub, 0, lhs, rhs});
            } else {
                return lhs;
            }
        }
    }

    int32_t parse_term(int depth) {
        int32_t lhs = parse_factor(depth + 1);
        for (;;) {
            if (eat('*')) {
                int32_t rhs = parse_factor(depth + 1);
                lhs = push({ExprOp::Mul, 0, lhs, rhs});
            } else if (eat('/')) {
                int32_t rhs = parse_factor(depth + 1);
                lhs = push({ExprOp::Div, 0, lhs, rhs});
            } else {
                return lhs;
            }
        }
    }

    int32_t parse_factor(int depth) {
        if (depth > 200) err("expression too deeply nested");
        if (eat_minus()) {
            int32_t c = parse_factor(depth + 1);
            return push({ExprOp::Neg, 0, c, -1});
        }
        int32_t base = parse_atom(depth + 1);
        if (eat('^')) {
            int32_t expo = parse_factor(depth + 1);
            return push({ExprOp::Pow, 0, base, expo});
        }
        return base;
    }

    int32_t parse_atom(int depth) {
        skip_ws();
        if (pos_ >= src_.size()) err("expected number, variable, function or '('");
        char c = src_[pos_];

        if (c == '(') {
            ++pos_;
            int32_t inner = parse_expr(depth + 1);
            if (!eat(')')) err("expected ')'");
            return inner;
        }

        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.')
            return parse_number();

        if (std::isalpha(static_cast<unsigned char>(c))) {
            std::size_t start = pos_;
            while (pos_ < src_.size() &&
                   std::isalnum(static_cast<unsigned char>(src_[pos_])))
                ++pos_;
            std::string id = src_.substr(start, pos_ - start);

            if (id == "t") return push({ExprOp::VarT, 0, -1, -1});
            if (id == "s") {
                if (arity_ < 2)
                    throw ParseError(ErrKind::ArityError,
                                     "variable 's' not allowed in a one-variable expression",
                                     start + 1);
                return push({ExprOp::VarS, 0, -1, -1});
            }
            for (const auto& f : kFuncs) {
                if (id == f.name) {
                    if (!eat('(')) err(std::string("expected '(' after '") + f.name + "'");
                    int32_t a = parse_expr(depth + 1);
                    int32_t b = -1;
                    if (f.args == 2) {
                        if (!eat(',')) err(std::string("'") + f.name + "' takes two arguments, expected ','");
                        b = parse_expr(depth + 1);
                    }
                    if (!eat(')')) err("expected ')'");
                    return push({f.op, 0, a, b});
                }
            }
            err("unknown identifier '" + id + "'", start);
        }

        err("expected number, variable, function or '('");
    }

    int32_t parse_number() {
        const char* begin = src_.c_str() + pos_;
        const char* end = src_.c_str() + src_.size();
        double v = 0;
        auto [p, ec] = std::from_chars(begin, end, v);
        if (ec != std::errc{} || p == begin) err("malformed number");
        pos_ = static_cast<std::size_t>(p - src_.c_str());
        return push({ExprOp::Num, v, -1, -1});
    }
};

ExprFn ExprFn::parse(const std::string& src, int arity) {
    if (arity != 1 && arity != 2)
        fail(ErrKind::InvalidArgument, "expression arity must be 1 or 2");
    ExprFn e;
    e.arity_ = arity;
    e.src_ = src;
    ExprParser(src, arity, e).run();
    return e;
}

namespace {

[[noreturn]] void domain_err(const char* what, double arg) {
    fail(ErrKind::DomainError, std::string(what) + " at argument " + format_double(arg));
}

double eval_pow(double x, double y) {
    if (x == 0.0 && y < 0.0) domain_err("zero raised to a negative power", y);
    if (x < 0.0 && y != std::nearbyint(y)) domain_err("negative base with non-integer exponent", x);
    double r = std::pow(x, y);
    if (!std::isfinite(r)) domain_err("power overflow", x);
    return r;
}

} // namespace

double ExprFn::eval(double t, double s) const {
    double stack[256];
    int top = 0;
    for (const ExprNode& n : nodes_) {
        double v;
        switch (n.op) {
            case ExprOp::Num: v = n.num; break;
            case ExprOp::VarT: v = t; break;
            case ExprOp::VarS: v = s; break;
            case ExprOp::Neg: v = -stack[--top]; break;
            case ExprOp::Exp: {
                double a = stack[--top];
                v = std::exp(a);
                if (!std::isfinite(v)) domain_err("exp overflow", a);
                break;
            }
            case ExprOp::Ln: {
                double a = stack[--top];
                if (a <= 0.0) domain_err("ln of a non-positive value", a);
                v = std::log(a);
                break;
            }
            case ExprOp::Abs: v = std::fabs(stack[--top]); break;
            case ExprOp::Sqrt: {
                double a = stack[--top];
                if (a < 0.0) domain_err("sqrt of a negative value", a);
                v = std::sqrt(a);
                break;
            }
            case ExprOp::Min: {
                double b = stack[--top], a = stack[--top];
                v = std::min(a, b);
                break;
            }
            case ExprOp::Max: {
                double b = stack[--top], a = stack[--top];
                v = std::max(a, b);
                break;
            }
            case ExprOp::Add: {
                double b = stack[--top], a = stack[--top];
                v = a + b;
                break;
            }
            case ExprOp::Sub: {
                double b = stack[--top], a = stack[--top];
                v = a - b;
                break;
            }
            case ExprOp::Mul: {
                double b = stack[--top], a = stack[--top];
                v = a * b;
                break;
            }
            case ExprOp::Div: {
                double b = stack[--top], a = stack[--top];
                if (b == 0.0) domain_err("division by zero", a);
                v = a / b;
                break;
            }
            case ExprOp::Pow: {
                double b = stack[--top], a = stack[--top];
                v = eval_pow(a, b);
                break;
            }
            default: fail(ErrKind::InvalidArgument, "corrupt expression node");
        }
        if (std::isnan(v)) domain_err("NaN result", t);
        stack[top++] = v;
    }
    if (top != 1) fail(ErrKind::InvalidArgument, "corrupt expression program");
    return stack[0];
}

double ExprFn::eval(double t) const {
    if (arity_ != 1)
        fail(ErrKind::ArityError, "two-variable expression evaluated with one argument");
    return eval(t, 0.0);
}

RealFn ExprFn::fn1() const {
    if (arity_ != 1) fail(ErrKind::ArityError, "expected a one-variable expression");
    ExprFn self = *this;
    return [self](double t) { return self.eval(t, 0.0); };
}

RealFn2 ExprFn::fn2() const {
    ExprFn self = *this;
    return [self](double t, double s) { return self.eval(t, s); };
}

bool ExprFn::same_ast(const ExprFn& other) const {
    if (arity_ != other.arity_ || nodes_.size() != other.nodes_.size()) return false;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const ExprNode &x = nodes_[i], &y = other.nodes_[i];
        if (x.op != y.op || x.a != y.a || x.b != y.b) return false;
        if (x.op == ExprOp::Num &&
            std::memcmp(&x.num, &y.num, sizeof(double)) != 0)
            return false;
    }
    return true;
}

namespace {

// precedence: + - (1), * / (2), unary - (3), ^ (4), atoms (5)
int prec_of(ExprOp op) {
    switch (op) {
        case ExprOp::Add: case ExprOp::Sub: return 1;
        case ExprOp::Mul: case ExprOp::Div: return 2;
        case ExprOp::Neg: return 3;
        case ExprOp::Pow: return 4;
        default: return 5;
    }
}

} // namespace

std::string ExprFn::print_node(int32_t idx, int parent_prec, bool rhs_of_tighter) const {
    const ExprNode& n = nodes_[idx];
    int p = prec_of(n.op);
    std::string s;
    switch (n.op) {
        case ExprOp::Num: s = format_double(n.num); break;
        case ExprOp::VarT: s = "t"; break;
        case ExprOp::VarS: s = "s"; break;
        case ExprOp::Neg: s = "-" + print_node(n.a, p, false); break;
        case ExprOp::Add: s = print_node(n.a, p, false) + " + " + print_node(n.b, p + 1, true); break;
        case ExprOp::Sub: s = print_node(n.a, p, false) + " - " + print_node(n.b, p + 1, true); break;
        case ExprOp::Mul: s = print_node(n.a, p, false) + "*" + print_node(n.b, p + 1, true); break;
        case ExprOp::Div: s = print_node(n.a, p, false) + "/" + print_node(n.b, p + 1, true); break;
        case ExprOp::Pow: s = print_node(n.a, p + 1, false) + "^" + print_node(n.b, p, true); break;
        case ExprOp::Exp: return "exp(" + print_node(n.a, 0, false) + ")";
        case ExprOp::Ln: return "ln(" + print_node(n.a, 0, false) + ")";
        case ExprOp::Abs: return "abs(" + print_node(n.a, 0, false) + ")";
        case ExprOp::Sqrt: return "sqrt(" + print_node(n.a, 0, false) + ")";
        case ExprOp::Min: return "min(" + print_node(n.a, 0, false) + ", " + print_node(n.b, 0, false) + ")";
        case ExprOp::Max: return "max(" + print_node(n.a, 0, false) + ", " + print_node(n.b, 0, false) + ")";
    }
    // a '-expr' on the right of any binary operator needs parentheses to
    // reparse as the same tree
    bool need = p < parent_prec || (n.op == ExprOp::Neg && rhs_of_tighter);
    return need ? "(" + s + ")" : s;
}

std::string ExprFn::to_string() const {
    if (nodes_.empty()) return "";
    return print_node(static_cast<int32_t>(nodes_.size()) - 1, 0, false);
}

} // namespace tsint
