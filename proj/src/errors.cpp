#include "confset/errors.hpp"

namespace confset {
namespace {

std::string FormatLocation(const std::string& source, const std::string& query_id,
                           const std::string& field, const std::string& detail) {
  std::string out = source.empty() ? "<input>" : source;
  if (!query_id.empty()) out += ": query '" + query_id + "'";
  if (!field.empty()) out += ": field '" + field + "'";
  out += ": " + detail;
  return out;
}

}  // namespace

IngestionError::IngestionError(std::string source, std::string query_id,
                               std::string field, const std::string& detail)
    : std::runtime_error(FormatLocation(source, query_id, field, detail)),
      source_(std::move(source)),
      query_id_(std::move(query_id)),
      field_(std::move(field)) {}

}  // namespace confset
