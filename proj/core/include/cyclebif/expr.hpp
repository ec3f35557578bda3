#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>

#include "cyclebif/errors.hpp"

namespace cyclebif {

/// First-order dual number: value plus one directional derivative.
/// Vector Jacobians are assembled one seeded slot at a time.
struct Dual {
    double v = 0.0;
    double d = 0.0;
};

namespace detail {
struct ExprNode;
}

/// Immutable arithmetic expression over named slots (variables/parameters).
/// Grammar: literals, identifiers, + - * / ^ (right-assoc), unary minus,
/// and calls to sin cos tan exp log sqrt abs.
class Expr {
  public:
    Expr() = default;

    /// Value at the given slot assignment. Deterministic; throws DomainError
    /// on log/sqrt/pow outside their domains.
    double eval(std::span<const double> slots) const;

    /// Value and derivative with respect to slot `seed`.
    Dual eval_dual(std::span<const double> slots, int seed) const;

    /// Minimal-parenthesis source form; re-parses to an equivalent tree.
    std::string to_string() const;

    bool empty() const { return root_ == nullptr; }

    /// Slots referenced by this expression (subset of the declared set).
    bool references(int slot) const;

  private:
    friend Expr parse_expression(const std::string&, const std::map<std::string, int>&);
    std::shared_ptr<const detail::ExprNode> root_;
};

/// Parses `text` against `declared` (name -> slot index).
/// Throws ParseError with a byte offset on syntax errors, and ParseError
/// naming the symbol on undeclared identifiers.
Expr parse_expression(const std::string& text, const std::map<std::string, int>& declared);

}  // namespace cyclebif
