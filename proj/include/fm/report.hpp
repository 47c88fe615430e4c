#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fm/error.hpp"
#include "fm/eval.hpp"
#include "fm/features_matrix.hpp"
#include "fm/store_io.hpp"
#include "fm/trainer.hpp"

namespace fm {

/// Shortest-safe decimal: 17 significant digits.
inline std::string format_g17(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string format_percent(double fraction_or_percent, bool already_percent = false) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", already_percent ? fraction_or_percent : 100.0 * fraction_or_percent);
  return buf;
}

inline std::string train_report_csv(const TrainReport& r) {
  std::ostringstream os;
  os << "epoch,ce,cl,total,train_acc\n";
  for (const auto& e : r.epochs) {
    os << e.epoch << ',' << format_g17(e.ce) << ',' << format_g17(e.cl) << ',' << format_g17(e.total) << ','
       << format_g17(e.train_accuracy) << '\n';
  }
  return os.str();
}

inline std::string train_report_json(const TrainReport& r) {
  nlohmann::ordered_json j;
  const auto& c = r.config;
  j["config"] = {{"gamma", c.gamma},   {"beta", c.beta},   {"tau", c.tau},
                 {"lr", c.lr},         {"epochs", c.epochs}, {"shots", c.shots},
                 {"batch_size", c.batch_size}, {"seed", c.seed}, {"negatives_per_class", c.negatives_per_class}};
  j["initial"] = {{"ce", r.initial.ce}, {"cl", r.initial.cl}, {"total", r.initial.total}};
  auto epochs = nlohmann::ordered_json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch}, {"ce", e.ce}, {"cl", e.cl}, {"total", e.total},
                      {"train_acc", e.train_accuracy}});
  }
  j["epochs"] = std::move(epochs);
  j["base_classes"] = r.final_state.base_classes;
  j["warnings"] = r.warnings;
  return j.dump(2) + "\n";
}

struct EvalRow {
  std::string dataset;
  BaseToNovelResult result;
};

inline std::string eval_csv(const std::vector<EvalRow>& rows) {
  std::ostringstream os;
  os << "dataset,base,novel,hm\n";
  for (const auto& r : rows) {
    os << r.dataset << ',' << format_percent(r.result.base.accuracy) << ',' << format_percent(r.result.novel.accuracy)
       << ',' << format_percent(r.result.hm, true) << '\n';
  }
  return os.str();
}

inline std::string eval_json(const std::vector<EvalRow>& rows) {
  auto arr = nlohmann::ordered_json::array();
  const auto part = [](const EvalResult& e) {
    return nlohmann::ordered_json{{"accuracy", e.accuracy},
                                  {"n_correct", e.n_correct},
                                  {"n_total", e.n_total},
                                  {"per_class_accuracy", e.per_class_accuracy}};
  };
  for (const auto& r : rows) {
    arr.push_back({{"dataset", r.dataset},
                   {"base", part(r.result.base)},
                   {"novel", part(r.result.novel)},
                   {"hm", r.result.hm},
                   {"base_classifier", std::string(to_string(r.result.base_classifier))},
                   {"novel_classifier", std::string(to_string(r.result.novel_classifier))}});
  }
  return arr.dump(2) + "\n";
}

/// Rows are templates, columns are classes.
inline std::string score_matrix_csv(const ScoreMatrix& s, const std::vector<std::string>& class_names = {}) {
  std::ostringstream os;
  os << "template";
  for (std::size_t k = 0; k < s.num_classes(); ++k) {
    os << ',' << (k < class_names.size() ? class_names[k] : "class_" + std::to_string(k));
  }
  os << '\n';
  for (std::size_t p = 0; p < s.num_templates(); ++p) {
    os << p;
    for (std::size_t k = 0; k < s.num_classes(); ++k) os << ',' << format_g17(s(p, k));
    os << '\n';
  }
  return os.str();
}

inline std::string selection_csv(const UnexpectedSelection& sel, const ScoreMatrix& s) {
  std::ostringstream os;
  os << "set,rank,template,class,score\n";
  const auto emit = [&](const char* name, const std::vector<FeatureIndex>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      os << name << ',' << i << ',' << v[i].template_index << ',' << v[i].class_index << ','
         << format_g17(s(v[i].template_index, v[i].class_index)) << '\n';
    }
  };
  emit("designated", sel.designated);
  emit("non_designated", sel.non_designated);
  return os.str();
}

// Adapter file "FMAS" v1, little-endian:
//   "FMAS" u32 version | u32 D, Kb | f64 tau | Kb u32 base classes
//   D*D f64 weight (row-major) | D f64 bias | Kb*D f64 text features

inline constexpr std::array<char, 4> kAdapterMagic = {'F', 'M', 'A', 'S'};
inline constexpr std::uint32_t kAdapterVersion = 1;

inline std::vector<unsigned char> encode_adapter(const AdapterState& st) {
  detail::LeWriter w;
  const std::size_t d = st.visual.dim();
  w.bytes(kAdapterMagic.data(), kAdapterMagic.size());
  w.u32(kAdapterVersion);
  w.u32(static_cast<std::uint32_t>(d));
  w.u32(static_cast<std::uint32_t>(st.base_classes.size()));
  w.f64(st.tau);
  for (std::size_t c : st.base_classes) w.u32(static_cast<std::uint32_t>(c));
  for (double x : st.visual.weight.data()) w.f64(x);
  for (double x : st.visual.bias) w.f64(x);
  for (const auto& t : st.text_feats) {
    for (double x : t) w.f64(x);
  }
  return w.buffer();
}

inline AdapterState decode_adapter(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kAdapterMagic.data(), 4) != 0) {
    throw Error(ErrorCode::BadMagic, "not an FMAS adapter file");
  }
  detail::LeReader r(bytes);
  (void)r.str(4);
  const std::uint32_t version = r.u32();
  if (version != kAdapterVersion) throw Error(ErrorCode::UnsupportedVersion, "FMAS version " + std::to_string(version));
  const std::uint32_t d = r.u32();
  const std::uint32_t kb = r.u32();
  const std::uint64_t expected = 8 + 4ull * kb + 8ull * (std::uint64_t{d} * d + d + std::uint64_t{kb} * d);
  if (r.remaining() != expected) throw Error(ErrorCode::CorruptStore, "adapter payload length mismatch");
  AdapterState st;
  st.tau = r.f64();
  st.base_classes.resize(kb);
  for (auto& c : st.base_classes) c = r.u32();
  st.visual.weight = Matrix(d, d);
  for (double& x : st.visual.weight.data()) x = r.f64();
  st.visual.bias.resize(d);
  for (double& x : st.visual.bias) x = r.f64();
  st.text_feats.assign(kb, Vec(d));
  for (auto& t : st.text_feats) {
    for (double& x : t) x = r.f64();
  }
  if (!st.all_finite()) throw Error(ErrorCode::CorruptStore, "non-finite adapter parameter");
  return st;
}

inline void adapter_write(const AdapterState& st, const std::string& path) {
  write_file_bytes(path, encode_adapter(st));
}

inline AdapterState adapter_read(const std::string& path) { return decode_adapter(read_file_bytes(path)); }

}  // namespace fm
