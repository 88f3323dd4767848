#pragma once

#include <stdexcept>
#include <string>

namespace framecast {

enum class ErrorKind {
  invalid_spec,    // bad generation/window/model parameters
  shape_mismatch,  // tensor or image dimensions disagree
  missing_frame,   // gap or absence in a frame directory
  config,          // unusable configuration file or field
  misuse,          // API contract violated (e.g. unfrozen encoder at GAN time)
  io,              // filesystem / codec failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

}  // namespace framecast
