#pragma once

#include <functional>
#include <string>

namespace kbcx {

using WarningSink = std::function<void(const std::string&)>;

/// Replaces the process-wide warning sink (default: standard error).
/// Returns the previous sink.
WarningSink set_warning_sink(WarningSink sink);

void warn(const std::string& message);

}  // namespace kbcx
