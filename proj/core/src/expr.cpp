#include "cyclebif/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <vector>

namespace cyclebif {

namespace detail {

enum class Op { add, sub, mul, div, pow };
enum class Fn { sin, cos, tan, exp, log, sqrt, abs };

struct ExprNode {
    enum class Kind { number, variable, neg, binary, call } kind;
    double number = 0.0;
    int slot = -1;
    std::string name;  // variable or function spelling, for printing
    Op op = Op::add;
    Fn fn = Fn::sin;
    std::shared_ptr<const ExprNode> lhs, rhs;  // neg/call use lhs only
};

using NodePtr = std::shared_ptr<const ExprNode>;

namespace {

std::string print_node(const ExprNode& n, int parent_prec);

// Precedence levels: + - (1), * / (2), unary minus (3), ^ (4), atoms (5).
int node_prec(const ExprNode& n) {
    switch (n.kind) {
        case ExprNode::Kind::binary:
            switch (n.op) {
                case Op::add:
                case Op::sub: return 1;
                case Op::mul:
                case Op::div: return 2;
                case Op::pow: return 4;
            }
            return 1;
        case ExprNode::Kind::neg: return 3;
        default: return 5;
    }
}

std::string print_binary(const ExprNode& n) {
    const char* sym = "+";
    switch (n.op) {
        case Op::add: sym = "+"; break;
        case Op::sub: sym = "-"; break;
        case Op::mul: sym = "*"; break;
        case Op::div: sym = "/"; break;
        case Op::pow: sym = "^"; break;
    }
    int p = node_prec(n);
    // Left-assoc ops need parens around an equal-precedence right child;
    // ^ is right-assoc, so the asymmetry flips.
    int lp = (n.op == Op::pow) ? p + 1 : p;
    int rp = (n.op == Op::pow) ? p : p + 1;
    return print_node(*n.lhs, lp) + sym + print_node(*n.rhs, rp);
}

std::string print_node(const ExprNode& n, int parent_prec) {
    std::string s;
    switch (n.kind) {
        case ExprNode::Kind::number: {
            std::ostringstream os;
            os.precision(17);
            os << n.number;
            s = os.str();
            break;
        }
        case ExprNode::Kind::variable:
            s = n.name;
            break;
        case ExprNode::Kind::neg:
            s = "-" + print_node(*n.lhs, node_prec(n));
            break;
        case ExprNode::Kind::binary:
            s = print_binary(n);
            break;
        case ExprNode::Kind::call:
            s = n.name + "(" + print_node(*n.lhs, 0) + ")";
            break;
    }
    if (node_prec(n) < parent_prec) return "(" + s + ")";
    return s;
}

[[noreturn]] void domain_fail(const char* what, const ExprNode& n) {
    std::string sub = print_node(n, 0);
    throw DomainError(std::string(what) + " in subexpression '" + sub + "'", sub);
}

double eval_d(const ExprNode& n, std::span<const double> slots);

double call_d(const ExprNode& n, double a) {
    switch (n.fn) {
        case Fn::sin: return std::sin(a);
        case Fn::cos: return std::cos(a);
        case Fn::tan: return std::tan(a);
        case Fn::exp: return std::exp(a);
        case Fn::log:
            if (a <= 0.0) domain_fail("log of non-positive argument", n);
            return std::log(a);
        case Fn::sqrt:
            if (a < 0.0) domain_fail("sqrt of negative argument", n);
            return std::sqrt(a);
        case Fn::abs: return std::abs(a);
    }
    return 0.0;
}

double eval_d(const ExprNode& n, std::span<const double> slots) {
    switch (n.kind) {
        case ExprNode::Kind::number: return n.number;
        case ExprNode::Kind::variable: return slots[static_cast<std::size_t>(n.slot)];
        case ExprNode::Kind::neg: return -eval_d(*n.lhs, slots);
        case ExprNode::Kind::binary: {
            double a = eval_d(*n.lhs, slots);
            double b = eval_d(*n.rhs, slots);
            switch (n.op) {
                case Op::add: return a + b;
                case Op::sub: return a - b;
                case Op::mul: return a * b;
                case Op::div: return a / b;
                case Op::pow: {
                    double r = std::pow(a, b);
                    if (std::isnan(r) && !std::isnan(a) && !std::isnan(b))
                        domain_fail("pow outside real domain", n);
                    return r;
                }
            }
            return 0.0;
        }
        case ExprNode::Kind::call: return call_d(n, eval_d(*n.lhs, slots));
    }
    return 0.0;
}

Dual eval_dl(const ExprNode& n, std::span<const double> slots, int seed) {
    switch (n.kind) {
        case ExprNode::Kind::number: return {n.number, 0.0};
        case ExprNode::Kind::variable:
            return {slots[static_cast<std::size_t>(n.slot)], n.slot == seed ? 1.0 : 0.0};
        case ExprNode::Kind::neg: {
            Dual a = eval_dl(*n.lhs, slots, seed);
            return {-a.v, -a.d};
        }
        case ExprNode::Kind::binary: {
            Dual a = eval_dl(*n.lhs, slots, seed);
            Dual b = eval_dl(*n.rhs, slots, seed);
            switch (n.op) {
                case Op::add: return {a.v + b.v, a.d + b.d};
                case Op::sub: return {a.v - b.v, a.d - b.d};
                case Op::mul: return {a.v * b.v, a.d * b.v + a.v * b.d};
                case Op::div: return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)};
                case Op::pow: {
                    double r = std::pow(a.v, b.v);
                    if (std::isnan(r) && !std::isnan(a.v) && !std::isnan(b.v))
                        domain_fail("pow outside real domain", n);
                    double der = 0.0;
                    if (a.d != 0.0) der += b.v * std::pow(a.v, b.v - 1.0) * a.d;
                    if (b.d != 0.0) {
                        if (a.v <= 0.0) domain_fail("pow with variable exponent needs positive base", n);
                        der += r * std::log(a.v) * b.d;
                    }
                    return {r, der};
                }
            }
            return {};
        }
        case ExprNode::Kind::call: {
            Dual a = eval_dl(*n.lhs, slots, seed);
            double v = call_d(n, a.v);
            double dfa = 0.0;
            switch (n.fn) {
                case Fn::sin: dfa = std::cos(a.v); break;
                case Fn::cos: dfa = -std::sin(a.v); break;
                case Fn::tan: dfa = 1.0 / (std::cos(a.v) * std::cos(a.v)); break;
                case Fn::exp: dfa = v; break;
                case Fn::log: dfa = 1.0 / a.v; break;
                case Fn::sqrt: dfa = a.v > 0.0 ? 0.5 / v : 0.0; break;
                case Fn::abs: dfa = a.v > 0.0 ? 1.0 : (a.v < 0.0 ? -1.0 : 0.0); break;
            }
            return {v, dfa * a.d};
        }
    }
    return {};
}

bool refs(const ExprNode& n, int slot) {
    switch (n.kind) {
        case ExprNode::Kind::number: return false;
        case ExprNode::Kind::variable: return n.slot == slot;
        case ExprNode::Kind::neg:
        case ExprNode::Kind::call: return refs(*n.lhs, slot);
        case ExprNode::Kind::binary: return refs(*n.lhs, slot) || refs(*n.rhs, slot);
    }
    return false;
}

class Parser {
  public:
    Parser(const std::string& text, const std::map<std::string, int>& declared)
        : text_(text), declared_(declared) {}

    NodePtr run() {
        if (text_.empty()) fail("empty expression", 0);
        NodePtr e = expr();
        skip_ws();
        if (pos_ != text_.size()) fail("unexpected trailing input", pos_);
        return e;
    }

  private:
    [[noreturn]] void fail(const std::string& msg, std::size_t at) const {
        throw ParseError("syntax error at offset " + std::to_string(at) + ": " + msg, at);
    }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool eat(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    char peek() {
        skip_ws();
        return pos_ < text_.size() ? text_[pos_] : '\0';
    }

    NodePtr expr() {
        NodePtr lhs = term();
        for (;;) {
            skip_ws();
            if (eat('+')) lhs = binary(Op::add, lhs, term());
            else if (eat('-')) lhs = binary(Op::sub, lhs, term());
            else return lhs;
        }
    }

    NodePtr term() {
        NodePtr lhs = unary();
        for (;;) {
            skip_ws();
            if (eat('*')) lhs = binary(Op::mul, lhs, unary());
            else if (eat('/')) lhs = binary(Op::div, lhs, unary());
            else return lhs;
        }
    }

    NodePtr unary() {
        if (eat('-')) {
            auto node = std::make_shared<ExprNode>();
            node->kind = ExprNode::Kind::neg;
            node->lhs = unary();
            return node;
        }
        return power();
    }

    // ^ binds tighter than unary minus and associates to the right,
    // so -x^2 parses as -(x^2) and 2^3^2 as 2^(3^2).
    NodePtr power() {
        NodePtr base = primary();
        if (eat('^')) return binary(Op::pow, base, unary());
        return base;
    }

    NodePtr primary() {
        skip_ws();
        if (pos_ >= text_.size()) fail("expected operand", pos_);
        char c = text_[pos_];
        if (c == '(') {
            ++pos_;
            NodePtr e = expr();
            if (!eat(')')) fail("expected ')'", pos_);
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
        fail(std::string("unexpected character '") + c + "'", pos_);
    }

    NodePtr number() {
        const char* begin = text_.c_str() + pos_;
        char* end = nullptr;
        double v = std::strtod(begin, &end);
        if (end == begin) fail("malformed number", pos_);
        pos_ += static_cast<std::size_t>(end - begin);
        auto node = std::make_shared<ExprNode>();
        node->kind = ExprNode::Kind::number;
        node->number = v;
        return node;
    }

    NodePtr identifier() {
        std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
            ++pos_;
        std::string name = text_.substr(start, pos_ - start);
        if (peek() == '(') {
            ++pos_;
            NodePtr arg = expr();
            if (!eat(')')) fail("expected ')' after function argument", pos_);
            auto node = std::make_shared<ExprNode>();
            node->kind = ExprNode::Kind::call;
            node->name = name;
            node->lhs = arg;
            if (name == "sin") node->fn = Fn::sin;
            else if (name == "cos") node->fn = Fn::cos;
            else if (name == "tan") node->fn = Fn::tan;
            else if (name == "exp") node->fn = Fn::exp;
            else if (name == "log") node->fn = Fn::log;
            else if (name == "sqrt") node->fn = Fn::sqrt;
            else if (name == "abs") node->fn = Fn::abs;
            else fail("unknown function '" + name + "'", start);
            return node;
        }
        auto it = declared_.find(name);
        if (it == declared_.end())
            throw ParseError("undeclared identifier '" + name + "'", start);
        auto node = std::make_shared<ExprNode>();
        node->kind = ExprNode::Kind::variable;
        node->slot = it->second;
        node->name = name;
        return node;
    }

    static NodePtr binary(Op op, NodePtr lhs, NodePtr rhs) {
        auto node = std::make_shared<ExprNode>();
        node->kind = ExprNode::Kind::binary;
        node->op = op;
        node->lhs = std::move(lhs);
        node->rhs = std::move(rhs);
        return node;
    }

    const std::string& text_;
    const std::map<std::string, int>& declared_;
    std::size_t pos_ = 0;
};

}  // namespace
}  // namespace detail

double Expr::eval(std::span<const double> slots) const {
    return detail::eval_d(*root_, slots);
}

Dual Expr::eval_dual(std::span<const double> slots, int seed) const {
    return detail::eval_dl(*root_, slots, seed);
}

std::string Expr::to_string() const {
    if (!root_) return "";
    return detail::print_node(*root_, 0);
}

bool Expr::references(int slot) const {
    return root_ && detail::refs(*root_, slot);
}

Expr parse_expression(const std::string& text, const std::map<std::string, int>& declared) {
    Expr e;
    e.root_ = detail::Parser(text, declared).run();
    return e;
}

}  // namespace cyclebif
