#pragma once

#include <stdexcept>
#include <string>

namespace mdembed {

// Every failure the library reports goes through one exception type with a
// kind tag, so callers (notably the CLI) can map failures to exit codes
// without string matching.
class Error : public std::runtime_error {
 public:
  enum class Kind {
    kShape,      // incompatible tensor shapes
    kValue,      // bad argument value or numeric contract violation
    kIo,         // filesystem read/write failure
    kFormat,     // malformed file or payload content
    kIntegrity,  // checksum/truncation failure on a binary artifact
    kConfig,     // invalid configuration or usage
    kTransport,  // remote backend unreachable after retries
  };

  Error(Kind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline Error shape_error(std::string msg) {
  return Error(Error::Kind::kShape, std::move(msg));
}
inline Error value_error(std::string msg) {
  return Error(Error::Kind::kValue, std::move(msg));
}
inline Error io_error(std::string msg) {
  return Error(Error::Kind::kIo, std::move(msg));
}
inline Error format_error(std::string msg) {
  return Error(Error::Kind::kFormat, std::move(msg));
}
inline Error integrity_error(std::string msg) {
  return Error(Error::Kind::kIntegrity, std::move(msg));
}
inline Error config_error(std::string msg) {
  return Error(Error::Kind::kConfig, std::move(msg));
}
inline Error transport_error(std::string msg) {
  return Error(Error::Kind::kTransport, std::move(msg));
}

}  // namespace mdembed
