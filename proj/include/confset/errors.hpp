#pragma once

#include <stdexcept>
#include <string>

namespace confset {

// Invalid argument to a numerical primitive (score out of range, empty set, bad alpha).
class DomainError : public std::invalid_argument {
 public:
  explicit DomainError(const std::string& what) : std::invalid_argument(what) {}
};

// Malformed input data. The message carries the location as
// "<source>: query '<id>': field '<field>': <detail>" where known.
class IngestionError : public std::runtime_error {
 public:
  IngestionError(std::string source, std::string query_id, std::string field,
                 const std::string& detail);

  const std::string& source() const noexcept { return source_; }
  const std::string& query_id() const noexcept { return query_id_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::string source_;
  std::string query_id_;
  std::string field_;
};

// Two inputs that must agree do not (calibration records vs queries,
// baseline fixture vs test split, artifact normalization vs flags).
class ConsistencyError : public std::runtime_error {
 public:
  explicit ConsistencyError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace confset
