#include "dataset_io.hpp"

#include <fstream>
#include <string>

#include "error.hpp"
#include "json.hpp"

namespace bisel {

using nlohmann::json;

Datasets load_dataset(const std::string& path, int vocab) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "dataset: cannot open '" + path + "'");
  Datasets data;
  int labeled_sft = 0;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw_invalid("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
    TokenSample s;
    std::string split;
    try {
      s.x = j.at("x").get<std::vector<int>>();
      s.y = j.at("y").get<std::vector<int>>();
      split = j.at("split").get<std::string>();
    } catch (const json::exception&) {
      throw_invalid("dataset line " + std::to_string(line_no) +
                    ": record needs integer arrays x, y and a split string");
    }
    try {
      s.validate(vocab);
    } catch (const Error& e) {
      throw_invalid("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
    if (split == "sft") {
      data.sft.push_back(std::move(s));
      if (j.contains("label")) {
        const std::string label = j.at("label").get<std::string>();
        if (label != "useful" && label != "useless")
          throw_invalid("dataset line " + std::to_string(line_no) + ": unknown label '" + label +
                        "'");
        data.sft_labels.push_back(label == "useless" ? Label::Useless : Label::Useful);
        ++labeled_sft;
      } else {
        data.sft_labels.push_back(Label::Useful);
      }
    } else if (split == "val") {
      data.val.push_back(std::move(s));
    } else if (split == "eval") {
      data.eval.push_back(std::move(s));
    } else {
      throw_invalid("dataset line " + std::to_string(line_no) + ": unknown split '" + split + "'");
    }
  }
  if (labeled_sft == 0) {
    data.sft_labels.clear();
  } else if (labeled_sft != static_cast<int>(data.sft.size())) {
    throw_invalid("dataset: " + std::to_string(labeled_sft) + " of " +
                  std::to_string(data.sft.size()) + " sft records carry labels; need all or none");
  }
  return data;
}

void save_dataset(const std::string& path, const Datasets& data) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "dataset: cannot write '" + path + "'");
  const bool labeled = data.labeled();
  for (std::size_t i = 0; i < data.sft.size(); ++i) {
    json j{{"x", data.sft[i].x}, {"y", data.sft[i].y}, {"split", "sft"}};
    if (labeled)
      j["label"] = data.sft_labels[i] == Label::Useless ? "useless" : "useful";
    out << j.dump() << '\n';
  }
  for (const auto& s : data.val) {
    out << json{{"x", s.x}, {"y", s.y}, {"split", "val"}}.dump() << '\n';
  }
  for (const auto& s : data.eval) {
    out << json{{"x", s.x}, {"y", s.y}, {"split", "eval"}}.dump() << '\n';
  }
  if (!out) throw Error(ErrorCode::Io, "dataset: write failed for '" + path + "'");
}

}  // namespace bisel
