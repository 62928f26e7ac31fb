#include "checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "error.hpp"
#include "json.hpp"

namespace bisel {

using nlohmann::json;

namespace {

constexpr char kBinaryMagic[8] = {'B', 'S', 'L', 'C', 'K', '0', '0', '1'};
constexpr int kJsonVersion = 1;

json spec_to_json(const BackboneSpec& s) {
  return {{"kind", to_string(s.kind)},
          {"vocab", s.vocab},
          {"max_context", s.max_context},
          {"question_len", s.question_len},
          {"hidden", s.hidden}};
}

BackboneSpec spec_from_json(const json& j) {
  BackboneSpec s;
  s.kind = backbone_kind_from_string(j.at("kind").get<std::string>());
  s.vocab = j.at("vocab").get<int>();
  s.max_context = j.at("max_context").get<int>();
  s.question_len = j.at("question_len").get<int>();
  s.hidden = j.at("hidden").get<int>();
  return s;
}

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::string& format, const Checkpoint& ckpt) {
  if (format == "json") {
    json j{{"version", kJsonVersion},
           {"backbone", spec_to_json(ckpt.spec)},
           {"params", ckpt.params.values},
           {"weight_logits", ckpt.weights.logits}};
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "checkpoint: cannot write '" + path + "'");
    out << j.dump(2) << '\n';
    return;
  }
  if (format != "binary") throw_config("checkpoint format must be 'json' or 'binary'");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "checkpoint: cannot write '" + path + "'");
  out.write(kBinaryMagic, sizeof(kBinaryMagic));
  write_raw(out, static_cast<std::int32_t>(ckpt.spec.kind));
  write_raw(out, static_cast<std::int32_t>(ckpt.spec.vocab));
  write_raw(out, static_cast<std::int32_t>(ckpt.spec.max_context));
  write_raw(out, static_cast<std::int32_t>(ckpt.spec.question_len));
  write_raw(out, static_cast<std::int32_t>(ckpt.spec.hidden));
  write_raw(out, static_cast<std::int64_t>(ckpt.params.values.size()));
  write_raw(out, static_cast<std::int64_t>(ckpt.weights.logits.size()));
  out.write(reinterpret_cast<const char*>(ckpt.params.values.data()),
            static_cast<std::streamsize>(ckpt.params.values.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(ckpt.weights.logits.data()),
            static_cast<std::streamsize>(ckpt.weights.logits.size() * sizeof(double)));
  if (!out) throw Error(ErrorCode::Io, "checkpoint: write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw Error(ErrorCode::Io, "checkpoint: cannot open '" + path + "'");
  char magic[8] = {};
  probe.read(magic, sizeof(magic));
  if (probe && std::memcmp(magic, kBinaryMagic, sizeof(magic)) == 0) {
    std::ifstream in(path, std::ios::binary);
    in.seekg(sizeof(magic));
    Checkpoint c;
    c.spec.kind = static_cast<BackboneKind>(read_raw<std::int32_t>(in));
    c.spec.vocab = read_raw<std::int32_t>(in);
    c.spec.max_context = read_raw<std::int32_t>(in);
    c.spec.question_len = read_raw<std::int32_t>(in);
    c.spec.hidden = read_raw<std::int32_t>(in);
    const auto n_params = read_raw<std::int64_t>(in);
    const auto n_weights = read_raw<std::int64_t>(in);
    c.params.values.resize(n_params);
    in.read(reinterpret_cast<char*>(c.params.values.data()),
            static_cast<std::streamsize>(n_params * sizeof(double)));
    std::vector<double> logits(n_weights);
    in.read(reinterpret_cast<char*>(logits.data()),
            static_cast<std::streamsize>(n_weights * sizeof(double)));
    if (!in) throw Error(ErrorCode::Io, "checkpoint: truncated binary file '" + path + "'");
    c.weights = WeightState(std::move(logits));
    return c;
  }
  std::ifstream in(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Io, "checkpoint: unreadable file '" + path + "': " + e.what());
  }
  if (j.value("version", 0) != kJsonVersion)
    throw Error(ErrorCode::Io, "checkpoint: unsupported version in '" + path + "'");
  Checkpoint c;
  c.spec = spec_from_json(j.at("backbone"));
  c.params.values = j.at("params").get<std::vector<double>>();
  c.weights = WeightState(j.at("weight_logits").get<std::vector<double>>());
  return c;
}

}  // namespace bisel
