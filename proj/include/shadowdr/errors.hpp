#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace shadowdr {

/// Process exit codes used by the command-line driver.
enum class ExitCode : int {
  success = 0,
  config_error = 2,
  data_error = 3,
  solver_failure = 4,
  oracle_inconsistency = 5,
};

/// Root of the library's exception hierarchy. Every error knows which exit
/// code it maps to and a short machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what, ExitCode code)
      : std::runtime_error(what), kind_(std::move(kind)), code_(code) {}

  const std::string& kind() const noexcept { return kind_; }
  ExitCode exit_code() const noexcept { return code_; }

 private:
  std::string kind_;
  ExitCode code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error("config_error", what, ExitCode::config_error) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what, std::string kind = "data_error")
      : Error(std::move(kind), what, ExitCode::data_error) {}
};

/// Non-finite input to a model evaluation.
class DomainError : public DataError {
 public:
  explicit DomainError(const std::string& what) : DataError(what, "domain_error") {}
};

class SampleSizeError : public DataError {
 public:
  explicit SampleSizeError(const std::string& what) : DataError(what, "sample_size_error") {}
};

class SingularDesignError : public DataError {
 public:
  explicit SingularDesignError(const std::string& what)
      : DataError(what, "singular_design") {}
};

/// No incomplete cases (or no complete cases): weights carry no information.
class DegenerateWeightsError : public DataError {
 public:
  explicit DegenerateWeightsError(const std::string& what)
      : DataError(what, "degenerate_weights") {}
};

/// Parse failure tied to a line of an input file.
class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what, "parse_error"), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class SolverError : public Error {
 public:
  SolverError(const std::string& what, std::string kind = "solver_error",
              double final_norm = 0.0, std::vector<std::vector<double>> path = {})
      : Error(std::move(kind), what, ExitCode::solver_failure),
        final_norm_(final_norm),
        path_(std::move(path)) {}

  double final_norm() const noexcept { return final_norm_; }
  /// Iterates visited by the solver, oldest first.
  const std::vector<std::vector<double>>& path() const noexcept { return path_; }

 private:
  double final_norm_;
  std::vector<std::vector<double>> path_;
};

class NumericalError : public SolverError {
 public:
  explicit NumericalError(const std::string& what) : SolverError(what, "numerical_error") {}
};

class OracleError : public Error {
 public:
  explicit OracleError(const std::string& what)
      : Error("oracle_inconsistency", what, ExitCode::oracle_inconsistency) {}
};

}  // namespace shadowdr
