#pragma once

// Dense row-major 2D grid, the storage type for micrographs, masks and
// level-set fields.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace asocem {

template <typename T>
class Image2D {
public:
    Image2D() = default;

    Image2D(int height, int width, T fill = T{})
        : height_(height), width_(width),
          pix_(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill) {
        if (height < 0 || width < 0)
            throw std::invalid_argument("Image2D: negative dimensions");
    }

    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t size() const { return pix_.size(); }
    bool empty() const { return pix_.empty(); }

    T& operator()(int r, int c) { return pix_[static_cast<std::size_t>(r) * width_ + c]; }
    const T& operator()(int r, int c) const { return pix_[static_cast<std::size_t>(r) * width_ + c]; }

    // Clamped access, replicates the border (Neumann condition).
    const T& at_clamped(int r, int c) const {
        r = r < 0 ? 0 : (r >= height_ ? height_ - 1 : r);
        c = c < 0 ? 0 : (c >= width_ ? width_ - 1 : c);
        return (*this)(r, c);
    }

    T* data() { return pix_.data(); }
    const T* data() const { return pix_.data(); }

    auto begin() { return pix_.begin(); }
    auto end() { return pix_.end(); }
    auto begin() const { return pix_.begin(); }
    auto end() const { return pix_.end(); }

    template <typename U>
    bool same_shape(const Image2D<U>& o) const {
        return height_ == o.height() && width_ == o.width();
    }

    bool operator==(const Image2D& o) const {
        return height_ == o.height_ && width_ == o.width_ && pix_ == o.pix_;
    }

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<T> pix_;
};

// Warning sink. Defaults to stderr; tests and embedders may replace it.
inline std::function<void(const std::string&)>& warn_handler() {
    static std::function<void(const std::string&)> handler =
        [](const std::string& msg) { std::cerr << "[asocem] warning: " << msg << "\n"; };
    return handler;
}

inline void warn(const std::string& msg) { warn_handler()(msg); }

}  // namespace asocem
