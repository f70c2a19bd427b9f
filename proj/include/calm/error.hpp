#pragma once

#include <stdexcept>
#include <string>

namespace calm {

/// Validation or numerical failure raised by one of the toolkit modules.
/// what() reads "<module>: <message>".
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& message);

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

}  // namespace calm
