#pragma once

#include <charconv>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hybridnet/error.hpp"
#include "hybridnet/metrics.hpp"
#include "hybridnet/stance.hpp"
#include "hybridnet/text.hpp"
#include "hybridnet/transcript.hpp"

namespace hybridnet {

inline constexpr std::string_view kMetricsSchema = "hybridnet.metrics/v1";

struct AuditRow {
  std::string statement_id;
  std::string text_hash;
  Stance label = Stance::neutral;
  LabelSource source = LabelSource::seed;
};

struct AnnotatedRun {
  std::vector<OpinionVector> opinions;  // iterations 0..T'
  std::vector<AuditRow> audit;
};

inline std::string revised_statement_id(SlotKey k) {
  return "t" + std::to_string(k.iteration) + "-r" + std::to_string(k.node.row) + "-c" + std::to_string(k.node.col);
}

/// Opinion vectors for iterations 0..upto. Iteration 0 takes the seed stances;
/// later iterations are labelled in batches of at most 20 statements. Without
/// `upto` the transcript must be complete.
inline AnnotatedRun annotate_run(const Transcript& t, Annotator& annotator, std::optional<int> upto = std::nullopt) {
  const int done = t.completed_iterations();
  const int last = upto.value_or(t.config.iterations);
  if (last < 0 || last > t.config.iterations) {
    throw Error(ErrorCode::out_of_range, "iteration " + std::to_string(last) + " outside 0.." +
                                             std::to_string(t.config.iterations));
  }
  if (done < last) {
    throw Error(ErrorCode::incomplete_transcript, "transcript is complete through iteration " +
                                                      std::to_string(done) + ", need " + std::to_string(last));
  }
  const auto topo = t.topology();
  const auto n = topo.size();

  AnnotatedRun out;
  OpinionVector z0{std::vector<int>(n), 0};
  for (std::size_t i = 0; i < n; ++i) {
    z0.values[topo.index(t.seed[i].node)] = value(t.seed[i].stance);
    out.audit.push_back({t.seed[i].statement_id, text::hex64(text::fnv1a64(t.seed[i].text)), t.seed[i].stance,
                         LabelSource::seed});
  }
  out.opinions.push_back(std::move(z0));

  for (int it = 1; it <= last; ++it) {
    OpinionVector z{std::vector<int>(n), it};
    for (std::size_t start = 0; start < n; start += kMaxBatchSize) {
      AnnotationBatch batch{t.question, {}};
      for (std::size_t i = start; i < std::min(n, start + kMaxBatchSize); ++i) {
        const auto& slot = t.slot({topo.node(i), it});
        batch.items.push_back({revised_statement_id(slot.key), *slot.text});
      }
      auto labels = annotate_batch(batch, annotator);
      for (std::size_t k = 0; k < batch.items.size(); ++k) {
        const auto& item = batch.items[k];
        const auto& label = labels.at(item.id);
        z.values[start + k] = value(label.value);
        out.audit.push_back({item.id, text::hex64(text::fnv1a64(item.text)), label.value, label.source});
      }
    }
    out.opinions.push_back(std::move(z));
  }
  return out;
}

inline MetricsSeries series_from_opinions(const std::vector<OpinionVector>& opinions, const GridTopology& topo,
                                          NeighborhoodOptions opts = {}) {
  MetricsSeries series;
  for (const auto& z : opinions) {
    series.records.push_back(metrics_record(z.iteration, std::span<const int>(z.values), topo, opts));
  }
  return series;
}

/// One record per iteration 0..T of a complete transcript.
inline MetricsSeries series_for_run(const Transcript& t, Annotator& annotator, NeighborhoodOptions opts = {}) {
  return series_from_opinions(annotate_run(t, annotator).opinions, t.topology(), opts);
}

/// Records through the latest fully committed iteration.
inline MetricsSeries series_through_latest(const Transcript& t, Annotator& annotator, NeighborhoodOptions opts = {}) {
  return series_from_opinions(annotate_run(t, annotator, t.completed_iterations()).opinions, t.topology(), opts);
}

inline std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc{} ? std::string(buf, end) : std::to_string(v);
}

inline void write_metrics_csv(const MetricsSeries& s, std::ostream& out) {
  out << "iteration,polarization,nci\n";
  for (const auto& r : s.records) {
    out << r.iteration << ',' << format_number(r.polarization) << ',' << (r.nci ? format_number(*r.nci) : "null")
        << '\n';
  }
}

inline MetricsSeries read_metrics_csv(std::istream& in) {
  MetricsSeries s;
  std::string line;
  if (!std::getline(in, line) || text::trim(line) != "iteration,polarization,nci") {
    throw Error(ErrorCode::parse, "metrics CSV must start with 'iteration,polarization,nci'");
  }
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    std::istringstream row(line);
    std::string it, pz, nc;
    if (!std::getline(row, it, ',') || !std::getline(row, pz, ',') || !std::getline(row, nc)) {
      throw Error(ErrorCode::parse, "malformed metrics row '" + line + "'");
    }
    try {
      MetricsRecord r{std::stoi(it), std::stod(pz), std::nullopt};
      nc = text::trim(nc);
      if (nc != "null" && !nc.empty()) r.nci = std::stod(nc);
      s.records.push_back(r);
    } catch (const std::exception&) {
      throw Error(ErrorCode::parse, "malformed metrics row '" + line + "'");
    }
  }
  return s;
}

/// Structured summary; `extra` fields (run id, framing, ...) are merged in.
inline nlohmann::json metrics_to_json(const MetricsSeries& s, const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : s.records) {
    records.push_back({{"iteration", r.iteration},
                       {"polarization", r.polarization},
                       {"nci", r.nci ? nlohmann::json(*r.nci) : nlohmann::json(nullptr)}});
  }
  nlohmann::json j{{"schema", kMetricsSchema}, {"model", s.model}, {"records", records}};
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  return j;
}

inline MetricsSeries metrics_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("schema", "") != kMetricsSchema) {
    throw Error(ErrorCode::parse, "not a " + std::string(kMetricsSchema) + " document");
  }
  MetricsSeries s;
  try {
    s.model = j.value("model", "experiment");
    for (const auto& r : j.at("records")) {
      MetricsRecord rec{r.at("iteration").get<int>(), r.at("polarization").get<double>(), std::nullopt};
      if (!r.at("nci").is_null()) rec.nci = r["nci"].get<double>();
      s.records.push_back(rec);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse, std::string("metrics: ") + e.what());
  }
  return s;
}

/// Reads either export format, chosen by content.
inline MetricsSeries load_metrics_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::not_found, "cannot open metrics file " + path);
  std::string content{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  auto trimmed = text::trim(content);
  if (!trimmed.empty() && trimmed.front() == '{') {
    try {
      return metrics_from_json(nlohmann::json::parse(trimmed));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::parse, e.what());
    }
  }
  std::istringstream ss(content);
  return read_metrics_csv(ss);
}

inline void write_audit_csv(const std::vector<AuditRow>& rows, std::ostream& out) {
  out << "statement_id,text_hash,label,source\n";
  for (const auto& r : rows) {
    out << r.statement_id << ',' << r.text_hash << ',' << value(r.label) << ',' << to_string(r.source) << '\n';
  }
}

}  // namespace hybridnet
