#pragma once

// Comma-separated reports: header row, one record per line, UNIX newlines.

#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "am3/errors.hpp"
#include "am3/text.hpp"
#include "am3/trainer.hpp"

namespace am3::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw DataError("CSV is missing column '" + name + "'");
  }

  bool has_column(const std::string& name) const {
    for (const auto& h : header) {
      if (h == name) return true;
    }
    return false;
  }

  double number(std::size_t row, std::size_t col) const {
    auto v = text::parse_double(text::trim(rows.at(row).at(col)));
    if (!v) throw DataError("CSV row " + std::to_string(row + 2) + ": '" + rows[row][col] + "' is not a number");
    return *v;
  }
};

inline Table read(std::istream& in) {
  Table t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    std::vector<std::string> fields;
    for (auto f : text::split(line, ',')) fields.emplace_back(text::trim(f));
    if (t.header.empty()) {
      t.header = std::move(fields);
    } else {
      if (fields.size() != t.header.size()) {
        throw ParseError("expected " + std::to_string(t.header.size()) + " fields", line_no);
      }
      t.rows.push_back(std::move(fields));
    }
  }
  if (t.header.empty()) throw DataError("CSV is empty");
  return t;
}

inline std::string num(double v) { return text::report_decimal(v); }

inline void write_loss_trace(std::ostream& out, const LossTrace& trace) {
  out << "iteration,learning_rate,batch_loss\n";
  for (const auto& r : trace) out << r.iteration << ',' << num(r.learning_rate) << ',' << num(r.batch_loss) << '\n';
}

inline void write_eval_header(std::ostream& out) {
  out << "n_episodes,n_way,k_shot,mean_accuracy,ci95,lambda_mean,lambda_std\n";
}

inline void write_eval_row(std::ostream& out, const EvalReport& r) {
  out << r.n_episodes << ',' << r.n_way << ',' << r.k_shot << ',' << num(r.mean_accuracy) << ','
      << num(r.ci95_halfwidth) << ',' << num(r.lambda_mean) << ',' << num(r.lambda_std) << '\n';
}

inline void write_episode_accuracies(std::ostream& out, const EvalReport& r) {
  out << "episode,accuracy\n";
  for (std::size_t i = 0; i < r.per_episode_accuracies.size(); ++i) {
    out << i << ',' << num(r.per_episode_accuracies[i]) << '\n';
  }
}

inline void write_lambda_rows(std::ostream& out, const std::vector<LambdaRow>& rows) {
  out << "k_shot,lambda_mean,lambda_std\n";
  for (const auto& r : rows) out << r.k_shot << ',' << num(r.lambda_mean) << ',' << num(r.lambda_std) << '\n';
}

inline void write_ablation_rows(std::ostream& out, const std::vector<AblationRow>& rows) {
  out << "mode,mean_accuracy,ci95\n";
  for (const auto& r : rows) {
    out << to_string(r.mode) << ',' << num(r.report.mean_accuracy) << ',' << num(r.report.ci95_halfwidth) << '\n';
  }
}

}  // namespace am3::csv
