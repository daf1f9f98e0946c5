#include "gridcouple/expression.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>

namespace gridcouple::expr {
namespace {

std::string format_location(SourceLocation w) {
    return "line " + std::to_string(w.line) + ", column " + std::to_string(w.column);
}

class Parser {
public:
    Parser(std::string_view text, SourceLocation origin) : text_(text), origin_(origin) {}

    std::shared_ptr<const Expression::Node> parse() {
        skip_space();
        if (at_end()) fail("empty expression");
        auto node = parse_sum();
        skip_space();
        if (!at_end()) fail(std::string("unexpected '") + peek() + "'");
        return node;
    }

private:
    using NodePtr = std::shared_ptr<const Expression::Node>;
    using Kind = Expression::Node::Kind;

    std::string_view text_;
    SourceLocation origin_;
    std::size_t pos_ = 0;

    [[nodiscard]] bool at_end() const { return pos_ >= text_.size(); }
    [[nodiscard]] char peek() const { return at_end() ? '\0' : text_[pos_]; }

    [[nodiscard]] SourceLocation here() const {
        SourceLocation w = origin_;
        for (std::size_t i = 0; i < pos_; ++i) {
            if (text_[i] == '\n') {
                ++w.line;
                w.column = 1;
            } else {
                ++w.column;
            }
        }
        return w;
    }

    [[noreturn]] void fail(const std::string& message) const { throw ParseError(message, here()); }

    void skip_space() {
        while (!at_end() && std::isspace(static_cast<unsigned char>(peek()))) ++pos_;
    }

    bool accept(char c) {
        skip_space();
        if (peek() != c) return false;
        ++pos_;
        return true;
    }

    NodePtr make_binary(char op, NodePtr lhs, NodePtr rhs, SourceLocation w) {
        auto n = std::make_shared<Expression::Node>();
        n->kind = Kind::Binary;
        n->op = op;
        n->args = {std::move(lhs), std::move(rhs)};
        n->where = w;
        return n;
    }

    NodePtr parse_sum() {
        auto lhs = parse_product();
        for (;;) {
            skip_space();
            const auto w = here();
            if (accept('+')) lhs = make_binary('+', lhs, parse_product(), w);
            else if (accept('-')) lhs = make_binary('-', lhs, parse_product(), w);
            else return lhs;
        }
    }

    NodePtr parse_product() {
        auto lhs = parse_unary();
        for (;;) {
            skip_space();
            const auto w = here();
            if (accept('*')) lhs = make_binary('*', lhs, parse_unary(), w);
            else if (accept('/')) lhs = make_binary('/', lhs, parse_unary(), w);
            else return lhs;
        }
    }

    NodePtr parse_unary() {
        skip_space();
        const auto w = here();
        if (accept('-')) {
            auto n = std::make_shared<Expression::Node>();
            n->kind = Kind::Negate;
            n->args = {parse_unary()};
            n->where = w;
            return n;
        }
        if (accept('+')) return parse_unary();
        auto base = parse_primary();
        skip_space();
        const auto wp = here();
        if (accept('^')) return make_binary('^', base, parse_unary(), wp);
        return base;
    }

    static bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
    static bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

    std::string parse_identifier() {
        const std::size_t start = pos_;
        while (!at_end() && ident_char(peek())) ++pos_;
        if (peek() == '.') {
            ++pos_;
            if (!ident_start(peek())) fail("expected a signal name after '.'");
            while (!at_end() && ident_char(peek())) ++pos_;
        }
        return std::string(text_.substr(start, pos_ - start));
    }

    NodePtr parse_primary() {
        skip_space();
        const auto w = here();
        if (at_end()) fail("unexpected end of expression");
        const char c = peek();
        if (c == '(') {
            ++pos_;
            auto inner = parse_sum();
            if (!accept(')')) fail("expected ')'");
            return inner;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            const std::string rest(text_.substr(pos_));
            char* end = nullptr;
            const double v = std::strtod(rest.c_str(), &end);
            if (end == rest.c_str()) fail("malformed number");
            pos_ += static_cast<std::size_t>(end - rest.c_str());
            auto n = std::make_shared<Expression::Node>();
            n->kind = Kind::Number;
            n->value = v;
            n->where = w;
            return n;
        }
        if (ident_start(c)) {
            auto n = std::make_shared<Expression::Node>();
            n->name = parse_identifier();
            n->where = w;
            if (accept('(')) {
                n->kind = Kind::Call;
                if (!accept(')')) {
                    do {
                        n->args.push_back(parse_sum());
                    } while (accept(','));
                    if (!accept(')')) fail("expected ')' or ',' in call to " + n->name);
                }
            } else {
                n->kind = Kind::Reference;
            }
            return n;
        }
        fail(std::string("unexpected '") + c + "'");
    }
};

void collect(const Expression::Node& n, Expression::Node::Kind kind, std::vector<std::string>& out) {
    if (n.kind == kind && std::find(out.begin(), out.end(), n.name) == out.end()) out.push_back(n.name);
    for (const auto& a : n.args) collect(*a, kind, out);
}

}  // namespace

ParseError::ParseError(const std::string& message, SourceLocation where)
    : ConfigError(format_location(where) + ": " + message), where_(where) {}

Expression Expression::parse(std::string_view text, SourceLocation origin) {
    Expression e;
    e.text_ = std::string(text);
    e.origin_ = origin;
    e.root_ = Parser(e.text_, origin).parse();
    return e;
}

std::vector<std::string> Expression::references() const {
    std::vector<std::string> out;
    collect(*root_, Node::Kind::Reference, out);
    return out;
}

std::vector<std::string> Expression::functions() const {
    std::vector<std::string> out;
    collect(*root_, Node::Kind::Call, out);
    return out;
}

BoundExpression::BoundExpression(const Expression& e, const SlotResolver& slots, const FunctionResolver& functions) {
    emit(e.root(), slots, functions, 1);
}

void BoundExpression::emit(const Expression::Node& n, const SlotResolver& slots, const FunctionResolver& functions,
                           std::size_t depth) {
    using Kind = Expression::Node::Kind;
    max_depth_ = std::max(max_depth_, depth);
    Op op;
    op.kind = n.kind;
    switch (n.kind) {
        case Kind::Number: op.value = n.value; break;
        case Kind::Reference: op.slot = slots(n.name, n.where); break;
        case Kind::Negate: emit(*n.args[0], slots, functions, depth); break;
        case Kind::Binary:
            emit(*n.args[0], slots, functions, depth);
            emit(*n.args[1], slots, functions, depth + 1);
            op.op = n.op;
            break;
        case Kind::Call: {
            auto spec = functions(n.name, n.where);
            if (spec.arity != n.args.size()) {
                throw ParseError(n.name + " takes " + std::to_string(spec.arity) + " argument(s), got " +
                                     std::to_string(n.args.size()),
                                 n.where);
            }
            for (std::size_t i = 0; i < n.args.size(); ++i) emit(*n.args[i], slots, functions, depth + i);
            op.argc = n.args.size();
            op.fn = std::move(spec.fn);
            break;
        }
    }
    program_.push_back(std::move(op));
}

double BoundExpression::evaluate(std::span<const double> slots) const {
    using Kind = Expression::Node::Kind;
    std::vector<double> stack;
    stack.reserve(max_depth_ + 1);
    for (const Op& op : program_) {
        switch (op.kind) {
            case Kind::Number: stack.push_back(op.value); break;
            case Kind::Reference: stack.push_back(slots[op.slot]); break;
            case Kind::Negate: stack.back() = -stack.back(); break;
            case Kind::Binary: {
                const double rhs = stack.back();
                stack.pop_back();
                double& lhs = stack.back();
                switch (op.op) {
                    case '+': lhs += rhs; break;
                    case '-': lhs -= rhs; break;
                    case '*': lhs *= rhs; break;
                    case '/': lhs /= rhs; break;
                    case '^': lhs = std::pow(lhs, rhs); break;
                    default: break;
                }
                break;
            }
            case Kind::Call: {
                const std::size_t base = stack.size() - op.argc;
                const double r = op.fn(std::span<const double>(stack.data() + base, op.argc));
                stack.resize(base);
                stack.push_back(r);
                break;
            }
        }
    }
    return stack.back();
}

}  // namespace gridcouple::expr
