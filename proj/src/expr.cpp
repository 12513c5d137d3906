#include "condiff/expr.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>

namespace condiff {

struct Expr::Node {
    Kind kind;
    double value = 0.0; // literal payload
    std::shared_ptr<const Node> lhs;
    std::shared_ptr<const Node> rhs;
};

namespace {

using Kind = Expr::Kind;

bool is_function(Kind k) {
    return k == Kind::fn_exp || k == Kind::fn_log || k == Kind::fn_sqrt || k == Kind::fn_abs;
}

// Printing precedence; higher binds tighter.
int precedence(Kind k) {
    switch (k) {
    case Kind::add:
    case Kind::sub:
        return 1;
    case Kind::mul:
    case Kind::divide:
        return 2;
    case Kind::neg:
        return 3;
    case Kind::pow:
        return 4;
    default:
        return 5;
    }
}

std::string format_literal(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

Expr Expr::literal(double v) {
    if (!std::isfinite(v)) {
        throw ConfigInvalidError("expression literals must be finite");
    }
    auto n = std::make_shared<Node>();
    n->kind = Kind::literal;
    n->value = v;
    return Expr(std::move(n));
}

Expr Expr::variable() {
    auto n = std::make_shared<Node>();
    n->kind = Kind::variable;
    return Expr(std::move(n));
}

Expr Expr::unary_minus(Expr e) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::neg;
    n->lhs = std::move(e.node_);
    return Expr(std::move(n));
}

Expr Expr::add(Expr a, Expr b) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::add;
    n->lhs = std::move(a.node_);
    n->rhs = std::move(b.node_);
    return Expr(std::move(n));
}

Expr Expr::sub(Expr a, Expr b) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::sub;
    n->lhs = std::move(a.node_);
    n->rhs = std::move(b.node_);
    return Expr(std::move(n));
}

Expr Expr::mul(Expr a, Expr b) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::mul;
    n->lhs = std::move(a.node_);
    n->rhs = std::move(b.node_);
    return Expr(std::move(n));
}

Expr Expr::div(Expr a, Expr b) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::divide;
    n->lhs = std::move(a.node_);
    n->rhs = std::move(b.node_);
    return Expr(std::move(n));
}

Expr Expr::pow(Expr a, Expr b) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::pow;
    n->lhs = std::move(a.node_);
    n->rhs = std::move(b.node_);
    return Expr(std::move(n));
}

Expr Expr::call(Kind fn, Expr arg) {
    if (!is_function(fn)) {
        throw ConfigInvalidError("Expr::call expects a function kind");
    }
    auto n = std::make_shared<Node>();
    n->kind = fn;
    n->lhs = std::move(arg.node_);
    return Expr(std::move(n));
}

Expr::Kind Expr::kind() const {
    if (!node_) {
        throw ConfigInvalidError("empty expression");
    }
    return node_->kind;
}

namespace {

double check_finite(double v) {
    if (!std::isfinite(v)) {
        throw NonFiniteError("expression evaluation produced a non-finite value");
    }
    return v;
}

double eval_node(const Expr::Node* n, double x) {
    switch (n->kind) {
    case Kind::literal:
        return n->value;
    case Kind::variable:
        return x;
    case Kind::neg:
        return -eval_node(n->lhs.get(), x);
    case Kind::add:
        return check_finite(eval_node(n->lhs.get(), x) + eval_node(n->rhs.get(), x));
    case Kind::sub:
        return check_finite(eval_node(n->lhs.get(), x) - eval_node(n->rhs.get(), x));
    case Kind::mul:
        return check_finite(eval_node(n->lhs.get(), x) * eval_node(n->rhs.get(), x));
    case Kind::divide: {
        const double num = eval_node(n->lhs.get(), x);
        const double den = eval_node(n->rhs.get(), x);
        if (den == 0.0) {
            throw DivisionByZeroError("division by zero in expression");
        }
        return check_finite(num / den);
    }
    case Kind::pow: {
        const double base = eval_node(n->lhs.get(), x);
        const double exponent = eval_node(n->rhs.get(), x);
        if (base == 0.0 && exponent < 0.0) {
            throw DivisionByZeroError("zero raised to a negative power");
        }
        if (base < 0.0 && exponent != std::rint(exponent)) {
            throw NonFiniteError("negative base raised to a non-integer power");
        }
        return check_finite(std::pow(base, exponent));
    }
    case Kind::fn_exp:
        return check_finite(std::exp(eval_node(n->lhs.get(), x)));
    case Kind::fn_log: {
        const double a = eval_node(n->lhs.get(), x);
        if (a <= 0.0) {
            throw NonFiniteError("log of a non-positive argument");
        }
        return check_finite(std::log(a));
    }
    case Kind::fn_sqrt: {
        const double a = eval_node(n->lhs.get(), x);
        if (a < 0.0) {
            throw NonFiniteError("sqrt of a negative argument");
        }
        return std::sqrt(a);
    }
    case Kind::fn_abs:
        return std::fabs(eval_node(n->lhs.get(), x));
    }
    throw Error("corrupt expression node");
}

const char* function_name(Kind k) {
    switch (k) {
    case Kind::fn_exp:
        return "exp";
    case Kind::fn_log:
        return "log";
    case Kind::fn_sqrt:
        return "sqrt";
    case Kind::fn_abs:
        return "abs";
    default:
        return "?";
    }
}

void print_node(const Expr::Node* n, std::string& out);

// Parenthesize a child when printing it bare would re-associate the tree.
void print_child(const Expr::Node* child, std::string& out, bool need_parens) {
    if (need_parens) {
        out += '(';
        print_node(child, out);
        out += ')';
    } else {
        print_node(child, out);
    }
}

void print_node(const Expr::Node* n, std::string& out) {
    switch (n->kind) {
    case Kind::literal:
        out += format_literal(n->value);
        return;
    case Kind::variable:
        out += 'x';
        return;
    case Kind::neg:
        out += '-';
        // "-a*b" would rebind the minus to a alone; "-a^b" round-trips.
        print_child(n->lhs.get(), out, precedence(n->lhs->kind) <= 2);
        return;
    case Kind::add:
    case Kind::sub: {
        print_child(n->lhs.get(), out, precedence(n->lhs->kind) < 1);
        out += (n->kind == Kind::add) ? " + " : " - ";
        // left-associative: a - (b + c) and a + (b + c) both need parens
        print_child(n->rhs.get(), out, precedence(n->rhs->kind) <= 1);
        return;
    }
    case Kind::mul:
    case Kind::divide: {
        print_child(n->lhs.get(), out, precedence(n->lhs->kind) < 2);
        out += (n->kind == Kind::mul) ? "*" : "/";
        print_child(n->rhs.get(), out, precedence(n->rhs->kind) <= 2);
        return;
    }
    case Kind::pow: {
        // right-associative, and the base must bind at least as tight as an
        // atom: (-x)^2 and (a^b)^c keep their parentheses.
        print_child(n->lhs.get(), out, precedence(n->lhs->kind) <= 4);
        out += '^';
        print_child(n->rhs.get(), out, precedence(n->rhs->kind) < 3);
        return;
    }
    default:
        out += function_name(n->kind);
        out += '(';
        print_node(n->lhs.get(), out);
        out += ')';
        return;
    }
}

} // namespace

double Expr::eval(double x) const {
    if (!node_) {
        throw ConfigInvalidError("empty expression");
    }
    return eval_node(node_.get(), x);
}

std::string Expr::pretty_print() const {
    if (!node_) {
        throw ConfigInvalidError("empty expression");
    }
    std::string out;
    print_node(node_.get(), out);
    return out;
}

namespace {

bool node_depends_on_x(const Expr::Node* n) {
    if (!n) {
        return false;
    }
    if (n->kind == Kind::variable) {
        return true;
    }
    return node_depends_on_x(n->lhs.get()) || node_depends_on_x(n->rhs.get());
}

} // namespace

bool Expr::depends_on_x() const {
    return node_depends_on_x(node_.get());
}

namespace {

bool nodes_equal(const Expr::Node* a, const Expr::Node* b) {
    if (a == b) {
        return true;
    }
    if (!a || !b || a->kind != b->kind) {
        return false;
    }
    if (a->kind == Kind::literal && a->value != b->value) {
        return false;
    }
    return nodes_equal(a->lhs.get(), b->lhs.get()) && nodes_equal(a->rhs.get(), b->rhs.get());
}

} // namespace

bool Expr::structurally_equal(const Expr& other) const {
    return nodes_equal(node_.get(), other.node_.get());
}

// ---------------------------------------------------------------------------
// Recursive-descent parser
// ---------------------------------------------------------------------------

namespace {

class Parser {
public:
    explicit Parser(std::string_view src) : src_(src) {}

    Expr parse() {
        skip_ws();
        if (pos_ >= src_.size()) {
            throw SyntaxError("empty expression", offset());
        }
        Expr e = parse_expr_rule();
        skip_ws();
        if (pos_ < src_.size()) {
            throw SyntaxError("unexpected trailing input", offset());
        }
        return e;
    }

private:
    std::string_view src_;
    std::size_t pos_ = 0;

    std::size_t offset() const { return pos_ + 1; } // 1-based

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) {
            ++pos_;
        }
    }

    bool peek_is(char c) {
        skip_ws();
        return pos_ < src_.size() && src_[pos_] == c;
    }

    bool consume(char c) {
        if (peek_is(c)) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c, const char* what) {
        if (!consume(c)) {
            throw SyntaxError(std::string("expected '") + c + "' (" + what + ")", offset());
        }
    }

    Expr parse_expr_rule() {
        Expr e = parse_term();
        while (true) {
            if (consume('+')) {
                e = Expr::add(std::move(e), parse_term());
            } else if (consume('-')) {
                e = Expr::sub(std::move(e), parse_term());
            } else {
                return e;
            }
        }
    }

    Expr parse_term() {
        Expr e = parse_factor();
        while (true) {
            if (consume('*')) {
                e = Expr::mul(std::move(e), parse_factor());
            } else if (consume('/')) {
                e = Expr::div(std::move(e), parse_factor());
            } else {
                return e;
            }
        }
    }

    // '^' binds tighter than unary minus and associates to the right.
    Expr parse_factor() {
        if (consume('-')) {
            return Expr::unary_minus(parse_factor());
        }
        Expr base = parse_atom();
        if (consume('^')) {
            return Expr::pow(std::move(base), parse_factor());
        }
        return base;
    }

    Expr parse_atom() {
        skip_ws();
        if (pos_ >= src_.size()) {
            throw SyntaxError("unexpected end of input", offset());
        }
        const char c = src_[pos_];
        if (c == '(') {
            ++pos_;
            Expr e = parse_expr_rule();
            expect(')', "closing parenthesis");
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '.' && pos_ + 1 < src_.size() &&
             std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
            return parse_number();
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            return parse_identifier();
        }
        throw SyntaxError(std::string("unexpected character '") + c + "'", offset());
    }

    Expr parse_number() {
        const std::size_t start = pos_;
        std::size_t end = pos_;
        bool seen_exp = false;
        while (end < src_.size()) {
            const char c = src_[end];
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
                ++end;
            } else if ((c == 'e' || c == 'E') && !seen_exp) {
                seen_exp = true;
                ++end;
                if (end < src_.size() && (src_[end] == '+' || src_[end] == '-')) {
                    ++end;
                }
            } else {
                break;
            }
        }
        double value = 0.0;
        const char* first = src_.data() + start;
        const char* last = src_.data() + end;
        auto [ptr, ec] = std::from_chars(first, last, value);
        if (ec != std::errc{} || ptr != last) {
            pos_ = start + static_cast<std::size_t>(ptr - first);
            throw SyntaxError("malformed number", offset());
        }
        pos_ = end;
        return Expr::literal(value);
    }

    Expr parse_identifier() {
        const std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
            ++pos_;
        }
        const std::string_view name = src_.substr(start, pos_ - start);
        if (name == "x") {
            return Expr::variable();
        }
        Expr::Kind fn;
        if (name == "exp") {
            fn = Expr::Kind::fn_exp;
        } else if (name == "log") {
            fn = Expr::Kind::fn_log;
        } else if (name == "sqrt") {
            fn = Expr::Kind::fn_sqrt;
        } else if (name == "abs") {
            fn = Expr::Kind::fn_abs;
        } else {
            throw UnknownIdentifierError(std::string(name), start + 1);
        }
        expect('(', "function argument list");
        Expr arg = parse_expr_rule();
        expect(')', "closing parenthesis");
        return Expr::call(fn, std::move(arg));
    }
};

} // namespace

Expr parse_expr(std::string_view src) {
    return Parser(src).parse();
}

} // namespace condiff
