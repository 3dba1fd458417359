#ifndef ALRANK_TESTS_SUPPORT_HPP
#define ALRANK_TESTS_SUPPORT_HPP

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <string>
#include <vector>

#include "alrank/common.hpp"
#include "alrank/datamodel.hpp"

namespace alrank::testing {

/// Directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& label) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("alrank-" + label + "-" + std::to_string(static_cast<long>(::getpid())) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Corpus of `docs` documents with 0..max_len words drawn from a vocabulary of `vocab` words.
inline Corpus random_corpus(Rng& rng, std::size_t docs, std::size_t vocab, std::size_t max_len) {
  Corpus c;
  for (std::size_t d = 0; d < docs; ++d) {
    std::string text;
    const std::size_t len = uniform_index(rng, max_len + 1);
    for (std::size_t k = 0; k < len; ++k) {
      if (!text.empty()) text += ' ';
      text += "w" + std::to_string(uniform_index(rng, vocab));
    }
    c.add(DocumentId("d" + std::to_string(d)), text);
  }
  return c;
}

inline std::string random_text(Rng& rng, std::size_t vocab, std::size_t min_len, std::size_t max_len) {
  std::string text;
  const std::size_t len = min_len + uniform_index(rng, max_len - min_len + 1);
  for (std::size_t k = 0; k < len; ++k) {
    if (!text.empty()) text += ' ';
    text += "w" + std::to_string(uniform_index(rng, vocab));
  }
  return text;
}

}  // namespace alrank::testing

#endif  // ALRANK_TESTS_SUPPORT_HPP
