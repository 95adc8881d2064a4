#pragma once

#include <stdexcept>
#include <string>

namespace longdoc {

// Every failure raised by the library carries the name of the module that
// detected it so the CLI can report "module: message" without a stack trace.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& message);

  const std::string& module() const noexcept { return module_; }
  // Message without the module prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string module_;
  std::string detail_;
};

}  // namespace longdoc
