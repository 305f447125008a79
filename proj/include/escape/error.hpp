#pragma once

#include <stdexcept>
#include <string>

namespace escape {

/// Base of every error thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters or configuration (mfcc params, filterbank, alpha grid ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent archive contents.
class ArchiveError : public Error {
 public:
  using Error::Error;
};

class WavError : public Error {
 public:
  using Error::Error;
};

/// Input too short for the requested operation (fewer samples than one window,
/// fewer frames than HMM states, ...).
class TooShortError : public Error {
 public:
  using Error::Error;
};

/// Cholesky factorization failed: matrix not positive definite.
class FactorizationError : public Error {
 public:
  using Error::Error;
};

/// The server rejected the session cookie (HTTP 401/403).
class AuthError : public Error {
 public:
  using Error::Error;
};

/// Transport failure that persisted after all retries.
class NetworkError : public Error {
 public:
  using Error::Error;
};

/// Label propagation needs at least one manual label.
class BootstrapRequired : public Error {
 public:
  BootstrapRequired()
      : Error("bootstrap required: no manual labels yet, label at least one clip by hand") {}
};

/// An error attributed to a single clip of a batch.
class ClipError : public Error {
 public:
  ClipError(std::string clip_id, const std::string& what)
      : Error("clip '" + clip_id + "': " + what), clip_id_(std::move(clip_id)) {}
  const std::string& clip_id() const noexcept { return clip_id_; }

 private:
  std::string clip_id_;
};

}  // namespace escape
