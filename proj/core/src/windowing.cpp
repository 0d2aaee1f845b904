#include "idcm/windowing.hpp"

#include <algorithm>

#include "idcm/util.hpp"

namespace idcm {

void WindowConfig::validate() const {
    if (w < 1) {
        throw ConfigError("window size w must be >= 1, got " + std::to_string(w));
    }
    if (o < 0 || o >= w) {
        throw ConfigError("window overlap must satisfy 0 <= o < w, got o=" + std::to_string(o) +
                          " w=" + std::to_string(w));
    }
    if (max_doc_tokens < w) {
        throw ConfigError("max_doc_tokens must be >= w, got " + std::to_string(max_doc_tokens));
    }
}

int window_count(std::size_t doc_len, const WindowConfig& cfg) {
    auto len = std::min<std::size_t>(doc_len, static_cast<std::size_t>(cfg.max_doc_tokens));
    return static_cast<int>((len + static_cast<std::size_t>(cfg.w) - 1) / static_cast<std::size_t>(cfg.w));
}

std::vector<PassageWindow> segment(const TokenizedDocument& doc, const WindowConfig& cfg) {
    cfg.validate();
    if (doc.tokens.empty()) {
        throw Error("cannot segment empty document '" + doc.doc_id + "'");
    }
    const int len = static_cast<int>(std::min<std::size_t>(doc.tokens.size(),
                                                           static_cast<std::size_t>(cfg.max_doc_tokens)));
    const int count = window_count(doc.tokens.size(), cfg);
    const int span = cfg.window_length();

    std::vector<PassageWindow> windows;
    windows.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        PassageWindow win;
        win.doc_id = doc.doc_id;
        win.window_index = i;
        win.tokens.assign(static_cast<std::size_t>(span), kPadId);
        win.pad_mask.assign(static_cast<std::size_t>(span), 0);
        const int begin = i * cfg.w - cfg.o;
        win.first_real_pos = std::max(begin, 0);
        win.last_real_pos = std::min(begin + span - 1, len - 1);
        for (int pos = win.first_real_pos; pos <= win.last_real_pos; ++pos) {
            auto slot = static_cast<std::size_t>(pos - begin);
            win.tokens[slot] = doc.tokens[static_cast<std::size_t>(pos)];
            win.pad_mask[slot] = 1;
        }
        windows.push_back(std::move(win));
    }
    return windows;
}

} // namespace idcm
