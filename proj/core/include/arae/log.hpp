#pragma once

#include <functional>
#include <string>

namespace arae {

using WarningSink = std::function<void(const std::string&)>;

/// Reports a recoverable anomaly. Goes to stderr unless a sink is installed.
void warn(const std::string& message);
/// Installs `sink` (empty restores stderr) and returns the previous one.
WarningSink set_warning_sink(WarningSink sink);

}  // namespace arae
