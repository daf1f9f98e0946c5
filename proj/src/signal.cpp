#include "gridcouple/signal.hpp"

#include <unordered_set>

#include "gridcouple/errors.hpp"

namespace gridcouple {

std::string_view to_string(SignalRole role) {
    switch (role) {
        case SignalRole::State: return "state";
        case SignalRole::Control: return "control";
        case SignalRole::Disturbance: return "disturbance";
        case SignalRole::Output: return "output";
    }
    return "unknown";
}

SignalSet::SignalSet(SignalRole role, std::vector<Signal> signals) : role_(role), signals_(std::move(signals)) {
    std::unordered_set<std::string> seen;
    for (const auto& s : signals_) {
        if (s.role != role_) {
            throw ConfigError("signal '" + s.name + "' has role " + std::string(to_string(s.role)) +
                              " in a " + std::string(to_string(role_)) + " list");
        }
        if (s.name.empty()) throw ConfigError("empty signal name");
        if (!seen.insert(s.name).second) throw ConfigError("duplicate signal name '" + s.name + "'");
    }
}

SignalSet SignalSet::of(SignalRole role, std::initializer_list<std::pair<const char*, const char*>> entries) {
    std::vector<Signal> out;
    out.reserve(entries.size());
    for (const auto& [name, unit] : entries) out.push_back({name, role, unit});
    return {role, std::move(out)};
}

SignalSet SignalSet::numbered(SignalRole role, const std::string& prefix, std::size_t n) {
    std::vector<Signal> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back({prefix + std::to_string(i + 1), role, ""});
    return {role, std::move(out)};
}

std::optional<std::size_t> SignalSet::find(std::string_view name) const {
    for (std::size_t i = 0; i < signals_.size(); ++i) {
        if (signals_[i].name == name) return i;
    }
    return std::nullopt;
}

std::size_t SignalSet::index_of(std::string_view name) const {
    if (auto i = find(name)) return *i;
    throw UsageError("unknown " + std::string(to_string(role_)) + " signal '" + std::string(name) + "'");
}

std::vector<std::string> SignalSet::names() const {
    std::vector<std::string> out;
    out.reserve(signals_.size());
    for (const auto& s : signals_) out.push_back(s.name);
    return out;
}

}  // namespace gridcouple
