#include "specaug/evaluate.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "specaug/confusion.hpp"
#include "specaug/errors.hpp"
#include "specaug/textio.hpp"

namespace specaug {

MapResult map_at_top_k(const DenseMatrix& scores, std::span<const std::vector<std::size_t>> ground_truth,
                       std::size_t k_eval) {
  const std::size_t n = ground_truth.size();
  const std::size_t c = scores.cols();
  if (n == 0) throw InvalidArgument("map_at_top_k: empty test set");
  if (scores.rows() != n) throw InvalidArgument("map_at_top_k: score rows differ from ground-truth count");
  if (k_eval == 0 || k_eval > c) {
    throw InvalidArgument("map_at_top_k: k_eval = " + std::to_string(k_eval) + " must be in [1, " +
                          std::to_string(c) + "]");
  }

  struct Detection {
    double score;
    std::size_t example;
  };
  std::vector<std::vector<Detection>> detections(c);
  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t label : top_k_labels(scores.row(x), k_eval)) detections[label].push_back({scores(x, label), x});

  std::vector<std::size_t> positives(c, 0);
  std::vector<std::vector<bool>> truth(n, std::vector<bool>(c, false));
  for (std::size_t x = 0; x < n; ++x) {
    for (std::size_t label : ground_truth[x]) {
      if (label >= c) throw InvalidArgument("map_at_top_k: ground-truth label out of range");
      truth[x][label] = true;
      ++positives[label];
    }
  }

  MapResult out;
  out.k_eval = k_eval;
  out.per_class_ap.resize(c);
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t label = 0; label < c; ++label) {
    if (positives[label] == 0) {
      out.excluded_classes.push_back(label);
      continue;
    }
    auto& ranked = detections[label];
    std::stable_sort(ranked.begin(), ranked.end(), [](const Detection& a, const Detection& b) {
      return a.score > b.score || (a.score == b.score && a.example < b.example);
    });
    double hits = 0.0;
    double precision_sum = 0.0;
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      if (!truth[ranked[r].example][label]) continue;
      hits += 1.0;
      precision_sum += hits / static_cast<double>(r + 1);
    }
    const double ap = precision_sum / static_cast<double>(positives[label]);
    out.per_class_ap[label] = ap;
    sum += ap;
    ++defined;
  }
  out.map_at_k = defined ? sum / static_cast<double>(defined) : 0.0;
  return out;
}

std::size_t default_k_eval(std::size_t num_labels) { return std::min<std::size_t>(50, num_labels); }

namespace {
std::uint64_t dense_cost(std::span<const Layer> layers) {
  std::uint64_t total = 0;
  for (const Layer& l : layers) total += static_cast<std::uint64_t>(l.spec.input_dim) * l.spec.output_dim;
  return total;
}
}  // namespace

std::uint64_t count_multiply_adds(const NetworkParams& net) { return dense_cost(net.layers); }

std::uint64_t count_multiply_adds(const AugmentedNetwork& net) {
  std::uint64_t total = dense_cost(net.trunk) + dense_cost(net.generalist);
  for (const auto& head : net.heads) total += dense_cost(head);
  total += static_cast<std::uint64_t>(net.generalist_width()) * net.num_labels();
  for (std::size_t h = 0; h < net.heads.size(); ++h)
    total += static_cast<std::uint64_t>(net.heads[h].back().spec.output_dim) * net.partition.clusters[h].size();
  return total;
}

EvalReport make_report(std::string model_id, const MapResult& map, std::uint64_t multiply_adds, std::size_t test_size) {
  if (multiply_adds == 0) throw InvalidArgument("make_report: multiply-add count must be positive");
  EvalReport r;
  r.baseline_id = model_id;
  r.model_id = std::move(model_id);
  r.map_at_k = map.map_at_k;
  r.per_class_ap = map.per_class_ap;
  r.multiply_adds = multiply_adds;
  r.k_eval = map.k_eval;
  r.test_size = test_size;
  return r;
}

ComparisonTable compare(std::span<const EvalReport> reports) {
  if (reports.size() < 2) throw InvalidArgument("compare: need at least two reports");
  const EvalReport& base = reports.front();
  ComparisonTable table{base.k_eval, {}};
  for (const EvalReport& r : reports) {
    if (r.k_eval != base.k_eval) {
      throw InvalidArgument("compare: report '" + r.model_id + "' uses k_eval " + std::to_string(r.k_eval) +
                            ", expected " + std::to_string(base.k_eval));
    }
    if (r.test_size != base.test_size) {
      throw InvalidArgument("compare: report '" + r.model_id + "' was evaluated on a different test set");
    }
    table.rows.push_back({r.model_id, r.map_at_k, r.map_at_k - base.map_at_k, r.multiply_adds,
                          static_cast<double>(r.multiply_adds) / static_cast<double>(base.multiply_adds)});
  }
  return table;
}

std::string render_text(const ComparisonTable& table) {
  std::size_t id_width = 5;
  for (const auto& r : table.rows) id_width = std::max(id_width, r.model_id.size());
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-*s  %12s  %10s  %14s  %8s\n", static_cast<int>(id_width), "model",
                ("mAP@" + std::to_string(table.k_eval)).c_str(), "delta", "multiply-adds", "overhead");
  out << buf;
  for (const auto& r : table.rows) {
    std::snprintf(buf, sizeof buf, "%-*s  %11.2f%%  %+9.2f%%  %14llu  %7.3fx\n", static_cast<int>(id_width),
                  r.model_id.c_str(), 100.0 * r.map_at_k, 100.0 * r.map_delta,
                  static_cast<unsigned long long>(r.multiply_adds), r.overhead_ratio);
    out << buf;
  }
  return out.str();
}

std::string render_csv(const ComparisonTable& table) {
  std::ostringstream out;
  out << "model,map_at_k,multiply_adds,overhead_ratio\n";
  for (const auto& r : table.rows) {
    out << r.model_id << ',' << textio::format_double(r.map_at_k) << ',' << r.multiply_adds << ','
        << textio::format_double(r.overhead_ratio) << '\n';
  }
  return out.str();
}

std::vector<ComparisonRow> parse_csv(const std::string& text) {
  std::istringstream in(text);
  textio::LineReader reader(in, "comparison csv");
  if (reader.next("csv header") != "model,map_at_k,multiply_adds,overhead_ratio") reader.fail("unexpected csv header");
  std::vector<ComparisonRow> rows;
  std::string line;
  while (reader.try_next(line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 4) reader.fail("expected 4 comma-separated fields");
    ComparisonRow r;
    r.model_id = fields[0];
    r.map_at_k = reader.to_double(fields[1]);
    r.multiply_adds = reader.to_count(fields[2]);
    r.overhead_ratio = reader.to_double(fields[3]);
    rows.push_back(std::move(r));
  }
  if (!rows.empty())
    for (auto& r : rows) r.map_delta = r.map_at_k - rows.front().map_at_k;
  return rows;
}

}  // namespace specaug
