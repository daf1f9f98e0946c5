#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gridcouple/errors.hpp"

namespace gridcouple::expr {

struct SourceLocation {
    int line = 1;
    int column = 1;
};

class ParseError : public ConfigError {
public:
    ParseError(const std::string& message, SourceLocation where);
    [[nodiscard]] SourceLocation where() const { return where_; }

private:
    SourceLocation where_;
};

/// Closed arithmetic language for coupling terms:
///   numbers, identifiers (`name` or `subsystem.signal`), + - * / ^, unary minus,
///   parentheses and calls `f(a, b, ...)` to registered functions.
class Expression {
public:
    struct Node {
        enum class Kind { Number, Reference, Negate, Binary, Call };
        Kind kind = Kind::Number;
        double value = 0.0;
        std::string name;  // Reference and Call
        char op = 0;       // Binary: + - * / ^
        std::vector<std::shared_ptr<const Node>> args;
        SourceLocation where;
    };

    /// `origin` is the file position of the first character of `text`.
    static Expression parse(std::string_view text, SourceLocation origin = {});

    [[nodiscard]] const std::string& text() const { return text_; }
    [[nodiscard]] const Node& root() const { return *root_; }
    [[nodiscard]] SourceLocation origin() const { return origin_; }

    /// Distinct referenced identifiers in first-appearance order.
    [[nodiscard]] std::vector<std::string> references() const;
    /// Distinct called function names in first-appearance order.
    [[nodiscard]] std::vector<std::string> functions() const;

private:
    std::string text_;
    SourceLocation origin_;
    std::shared_ptr<const Node> root_;
};

/// An expression with every identifier mapped to a slot and every call to a function.
class BoundExpression {
public:
    using Function = std::function<double(std::span<const double>)>;
    struct FunctionSpec {
        Function fn;
        std::size_t arity = 1;
    };
    /// Slot index for an identifier; throw ConfigError for unknown names.
    using SlotResolver = std::function<std::size_t(const std::string& name, SourceLocation where)>;
    using FunctionResolver = std::function<FunctionSpec(const std::string& name, SourceLocation where)>;

    BoundExpression() = default;
    BoundExpression(const Expression& e, const SlotResolver& slots, const FunctionResolver& functions);

    [[nodiscard]] double evaluate(std::span<const double> slots) const;

private:
    struct Op {
        Expression::Node::Kind kind = Expression::Node::Kind::Number;
        double value = 0.0;
        std::size_t slot = 0;
        char op = 0;
        std::size_t argc = 0;
        Function fn;
    };
    // Postfix program evaluated with a small value stack.
    std::vector<Op> program_;
    std::size_t max_depth_ = 0;

    void emit(const Expression::Node& n, const SlotResolver& slots, const FunctionResolver& functions, std::size_t depth);
};

}  // namespace gridcouple::expr
