#pragma once

#include <stdexcept>
#include <string>

namespace srcmix {

// Malformed input text (bad field count, non-numeric token, ...).
// Messages carry a 1-based line number where applicable.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Structurally well-formed input that violates a domain invariant
// (invalid BIO sequence, shape mismatch, bad config value, ...).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Missing or unreadable/unwritable files.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed config/spec file contents (distinct from data-file problems so
// the CLI can prefix these separately).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite loss or gradient during training.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Sentence not present in an extraction cache.
class CacheMissError : public std::runtime_error {
 public:
  explicit CacheMissError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace srcmix
