#pragma once

#include <functional>
#include <string>

namespace gridcouple {

using WarningSink = std::function<void(const std::string&)>;

/// Replaces the process-wide warning sink and returns the previous one.
/// The default sink writes to stderr. Thread-safe.
WarningSink set_warning_sink(WarningSink sink);

void warn(const std::string& message);

}  // namespace gridcouple
