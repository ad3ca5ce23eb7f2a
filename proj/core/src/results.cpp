#include "siriib/results.hpp"

#include "siriib/error.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

namespace siriib {

void ResultsTable::add_row(std::string label, std::vector<double> values) {
  require(values.size() == columns.size(), ErrorCode::kInvalidArgument,
          "results row '" + label + "' has " + std::to_string(values.size()) + " values for " +
              std::to_string(columns.size()) + " columns");
  rows.push_back({std::move(label), std::move(values)});
}

std::string ResultsTable::format_text(int precision) const {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> head{row_header};
  head.insert(head.end(), columns.begin(), columns.end());
  cells.push_back(head);
  for (const auto& r : rows) {
    std::vector<std::string> line{r.label};
    for (double v : r.values) {
      std::ostringstream ss;
      ss << std::fixed << std::setprecision(precision) << v;
      line.push_back(ss.str());
    }
    cells.push_back(line);
  }
  std::vector<size_t> width(head.size(), 0);
  for (const auto& line : cells) {
    for (size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  }
  std::ostringstream out;
  if (!title.empty()) out << title << "\n";
  auto rule = [&] {
    for (size_t c = 0; c < width.size(); ++c) out << (c ? "-+-" : "") << std::string(width[c], '-');
    out << "\n";
  };
  for (size_t i = 0; i < cells.size(); ++i) {
    for (size_t c = 0; c < cells[i].size(); ++c) {
      out << (c ? " | " : "") << std::setw(static_cast<int>(width[c]))
          << (c == 0 ? std::left : std::right) << cells[i][c];
    }
    out << "\n";
    if (i == 0) rule();
  }
  return out.str();
}

std::vector<nlohmann::json> ResultsTable::records() const {
  std::vector<nlohmann::json> out;
  for (const auto& r : rows) {
    nlohmann::json j{{"table", title}, {row_header, r.label}};
    for (size_t c = 0; c < columns.size(); ++c) j[columns[c]] = r.values[c];
    out.push_back(std::move(j));
  }
  return out;
}

void write_results(const std::filesystem::path& stem, const ResultsTable& table) {
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  {
    std::ofstream txt(stem.string() + ".txt");
    require(static_cast<bool>(txt), ErrorCode::kIo, "cannot write " + stem.string() + ".txt");
    txt << table.format_text();
  }
  std::ofstream jsonl(stem.string() + ".jsonl");
  require(static_cast<bool>(jsonl), ErrorCode::kIo, "cannot write " + stem.string() + ".jsonl");
  for (const auto& r : table.records()) jsonl << r.dump() << "\n";
}

JsonLinesWriter::JsonLinesWriter(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::app);
  require(static_cast<bool>(out_), ErrorCode::kIo, "cannot open " + path.string());
}

void JsonLinesWriter::write(const nlohmann::json& record) {
  out_ << record.dump() << "\n";
  out_.flush();
}

std::vector<nlohmann::json> read_json_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  std::vector<nlohmann::json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(nlohmann::json::parse(line));
  }
  return out;
}

}  // namespace siriib
