#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace siriib {

/// A labelled table of numbers, written both as JSON lines and as an aligned
/// text table.
struct ResultsTable {
  std::string title;
  std::string row_header = "Model";
  std::vector<std::string> columns;
  struct Row {
    std::string label;
    std::vector<double> values;
  };
  std::vector<Row> rows;

  void add_row(std::string label, std::vector<double> values);

  std::string format_text(int precision = 2) const;
  std::vector<nlohmann::json> records() const;
};

/// Writes <stem>.txt and <stem>.jsonl.
void write_results(const std::filesystem::path& stem, const ResultsTable& table);

/// Appends one JSON object per line.
class JsonLinesWriter {
 public:
  explicit JsonLinesWriter(const std::filesystem::path& path);

  void write(const nlohmann::json& record);

 private:
  std::ofstream out_;
};

std::vector<nlohmann::json> read_json_lines(const std::filesystem::path& path);

}  // namespace siriib
