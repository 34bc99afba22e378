#include "handshake/error.hpp"

#include <iostream>

namespace handshake {

void warn(const std::string& message) { std::clog << "warning: " << message << '\n'; }

}  // namespace handshake
