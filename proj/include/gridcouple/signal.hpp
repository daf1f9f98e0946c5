#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gridcouple {

enum class SignalRole { State, Control, Disturbance, Output };

[[nodiscard]] std::string_view to_string(SignalRole role);

struct Signal {
    std::string name;
    SignalRole role;
    std::string unit;
};

/// Ordered list of signals sharing one role, with unique names.
class SignalSet {
public:
    SignalSet() = default;
    SignalSet(SignalRole role, std::vector<Signal> signals);

    /// Builds a set from (name, unit) pairs.
    static SignalSet of(SignalRole role, std::initializer_list<std::pair<const char*, const char*>> entries);
    /// prefix1..prefixN, unit-less.
    static SignalSet numbered(SignalRole role, const std::string& prefix, std::size_t n);

    [[nodiscard]] SignalRole role() const { return role_; }
    [[nodiscard]] std::size_t size() const { return signals_.size(); }
    [[nodiscard]] bool empty() const { return signals_.empty(); }
    [[nodiscard]] const Signal& operator[](std::size_t i) const { return signals_[i]; }
    [[nodiscard]] const std::vector<Signal>& signals() const { return signals_; }
    [[nodiscard]] std::optional<std::size_t> find(std::string_view name) const;
    /// Throws UsageError if the name is not present.
    [[nodiscard]] std::size_t index_of(std::string_view name) const;
    [[nodiscard]] std::vector<std::string> names() const;

    auto begin() const { return signals_.begin(); }
    auto end() const { return signals_.end(); }

private:
    SignalRole role_ = SignalRole::State;
    std::vector<Signal> signals_;
};

}  // namespace gridcouple
