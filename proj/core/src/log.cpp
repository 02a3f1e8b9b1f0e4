#include "arae/log.hpp"

#include <iostream>

namespace arae {

namespace {

WarningSink& sink() {
  static WarningSink s;
  return s;
}

}  // namespace

void warn(const std::string& message) {
  if (sink()) {
    sink()(message);
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

WarningSink set_warning_sink(WarningSink s) {
  auto prev = std::move(sink());
  sink() = std::move(s);
  return prev;
}

}  // namespace arae
