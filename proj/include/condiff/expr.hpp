#pragma once

#include <memory>
#include <string>
#include <string_view>

#include "condiff/errors.hpp"

namespace condiff {

// Immutable arithmetic expression over one variable x.
//
// Grammar accepted by parse_expr (whitespace insignificant, numbers in
// decimal or scientific notation, 1-based byte offsets in errors):
//
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := '-' factor | atom ('^' factor)?
//   atom   := number | 'x' | func '(' expr ')' | '(' expr ')'
//   func   := 'exp' | 'log' | 'sqrt' | 'abs'
//
// '^' is right-associative and binds tighter than unary minus, so
// "-2^2" evaluates to -4 while "2^3^2" evaluates to 512.
class Expr {
public:
    enum class Kind {
        literal,
        variable,
        neg,
        add,
        sub,
        mul,
        divide,
        pow,
        fn_exp,
        fn_log,
        fn_sqrt,
        fn_abs,
    };

    Expr() = default;

    static Expr literal(double v);
    static Expr variable();
    static Expr unary_minus(Expr e);
    static Expr add(Expr a, Expr b);
    static Expr sub(Expr a, Expr b);
    static Expr mul(Expr a, Expr b);
    static Expr div(Expr a, Expr b);
    static Expr pow(Expr a, Expr b);
    static Expr call(Kind fn, Expr arg);

    bool valid() const { return node_ != nullptr; }
    Kind kind() const;

    // IEEE-style evaluation, except domain violations surface as errors
    // instead of silently propagating NaN: log/sqrt of a negative number,
    // a negative base raised to a non-integer power, or any non-finite
    // intermediate throw NonFiniteError; x/0 throws DivisionByZeroError.
    double eval(double x) const;

    // Minimal-parenthesis rendering; parsing the result reproduces the tree.
    std::string pretty_print() const;

    bool depends_on_x() const;
    bool structurally_equal(const Expr& other) const;

    struct Node; // opaque; defined in expr.cpp

private:
    explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
    std::shared_ptr<const Node> node_;
};

Expr parse_expr(std::string_view src);

} // namespace condiff
