#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "idcm/corpus_io.hpp"

namespace idcm {

struct WindowConfig {
    int w = 50;                 // base window size (stride)
    int o = 7;                  // overlap added on each side
    int max_doc_tokens = 2000;  // documents are truncated before windowing

    int window_length() const noexcept { return w + 2 * o; }
    /// Largest window count a document can produce.
    int max_windows() const noexcept { return (max_doc_tokens + w - 1) / w; }
    void validate() const;
};

/// One fixed-length slice of a document. Window i covers document positions
/// [i*w - o, (i+1)*w + o - 1]; out-of-range positions hold PAD.
struct PassageWindow {
    std::string doc_id;
    int window_index = 0;
    std::vector<TokenId> tokens;
    std::vector<std::uint8_t> pad_mask;  // 1 = real token
    int first_real_pos = 0;
    int last_real_pos = 0;

    int real_length() const noexcept { return last_real_pos - first_real_pos + 1; }
};

/// ceil(min(doc_len, max_doc_tokens) / w).
int window_count(std::size_t doc_len, const WindowConfig& cfg);

/// Throws ConfigError for o >= w and Error for an empty document.
std::vector<PassageWindow> segment(const TokenizedDocument& doc, const WindowConfig& cfg);

} // namespace idcm
