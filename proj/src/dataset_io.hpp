#ifndef BISEL_DATASET_IO_HPP
#define BISEL_DATASET_IO_HPP

#include <string>

#include "instance.hpp"

namespace bisel {

// JSONL datasets, one record per sample:
//   {"x": [ints], "y": [ints], "split": "sft"|"val"|"eval", "label": "useful"|"useless"}
// label is optional and only meaningful on the sft split; if any sft record is
// labeled, all must be.
Datasets load_dataset(const std::string& path, int vocab);
void save_dataset(const std::string& path, const Datasets& data);

}  // namespace bisel

#endif
