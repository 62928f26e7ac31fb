#ifndef BISEL_TOKEN_HPP
#define BISEL_TOKEN_HPP

#include <string>
#include <vector>

#include "error.hpp"

namespace bisel {

// One question/response pair over a finite vocabulary.
struct TokenSample {
  std::vector<int> x;  // question, length >= 1
  std::vector<int> y;  // response, length >= 1

  void validate(int vocab) const {
    if (x.empty() || y.empty()) throw_invalid("token sample: empty sequence");
    for (int t : x) {
      if (t < 0 || t >= vocab)
        throw_invalid("token sample: question id " + std::to_string(t) + " outside [0, " +
                      std::to_string(vocab) + ")");
    }
    for (int t : y) {
      if (t < 0 || t >= vocab)
        throw_invalid("token sample: response id " + std::to_string(t) + " outside [0, " +
                      std::to_string(vocab) + ")");
    }
  }
};

enum class Label { Useful, Useless };

}  // namespace bisel

#endif
