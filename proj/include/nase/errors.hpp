#pragma once

#include <stdexcept>
#include <string>

namespace nase {

// Process exit codes used by the command-line tool; each error class below maps
// to exactly one of them.
enum class ExitCode : int {
  ok = 0,
  failure = 1,
  usage = 2,
  schema = 3,
  missing_file = 4,
  version_mismatch = 5,
  empty_input = 6,
  numeric = 7,
};

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MissingFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class VersionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite or diverging values during training or sampling.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace nase
