#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tilediff {

/// Where large sample buffers go. Planes whose height or width exceeds
/// `spill_extent` are backed by a memory-mapped scratch file in
/// `scratch_dir` instead of the heap.
struct StorageOptions {
    long spill_extent = 16384;
    std::filesystem::path scratch_dir = std::filesystem::temp_directory_path();
};

namespace detail {
class MappedRegion;
}

/// Contiguous double buffer, heap- or file-backed. Copies are deep.
class SampleBuffer {
public:
    SampleBuffer() noexcept;
    explicit SampleBuffer(std::size_t count, double fill = 0.0);
    static SampleBuffer mapped(std::size_t count, const std::filesystem::path& dir);

    SampleBuffer(const SampleBuffer& other);
    SampleBuffer& operator=(const SampleBuffer& other);
    SampleBuffer(SampleBuffer&& other) noexcept;
    SampleBuffer& operator=(SampleBuffer&& other) noexcept;
    ~SampleBuffer();

    double* data() noexcept { return data_; }
    const double* data() const noexcept { return data_; }
    std::size_t size() const noexcept { return size_; }
    bool is_mapped() const noexcept { return static_cast<bool>(mapped_); }

private:
    void rebind();

    std::vector<double> heap_;
    std::unique_ptr<detail::MappedRegion> mapped_;
    double* data_ = nullptr;
    std::size_t size_ = 0;
};

struct Extent {
    long height = 0;
    long width = 0;
    friend bool operator==(const Extent&, const Extent&) = default;
};

/// Planar multi-channel image, samples stored as [channel][row][column].
/// `resolution` is the spatial-resolution tag in µm/px (0 means untagged).
class ImagePlane {
public:
    ImagePlane() = default;
    ImagePlane(int channels, long height, long width, double resolution = 0.0, double fill = 0.0);
    ImagePlane(int channels, long height, long width, double resolution, const StorageOptions& storage);

    int channels() const noexcept { return channels_; }
    long height() const noexcept { return height_; }
    long width() const noexcept { return width_; }
    Extent extent() const noexcept { return {height_, width_}; }
    std::size_t size() const noexcept { return buffer_.size(); }
    bool empty() const noexcept { return size() == 0; }

    double resolution() const noexcept { return resolution_; }
    void set_resolution(double r) noexcept { resolution_ = r; }

    double& at(int c, long y, long x) noexcept { return buffer_.data()[index(c, y, x)]; }
    double at(int c, long y, long x) const noexcept { return buffer_.data()[index(c, y, x)]; }

    std::span<double> samples() noexcept { return {buffer_.data(), buffer_.size()}; }
    std::span<const double> samples() const noexcept { return {buffer_.data(), buffer_.size()}; }
    std::span<double> channel(int c) noexcept;
    std::span<const double> channel(int c) const noexcept;
    double* row(int c, long y) noexcept { return buffer_.data() + index(c, y, 0); }
    const double* row(int c, long y) const noexcept { return buffer_.data() + index(c, y, 0); }

    bool same_shape(const ImagePlane& other) const noexcept {
        return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
    }
    bool is_mapped() const noexcept { return buffer_.is_mapped(); }
    bool all_finite() const noexcept;

    void fill(double v) noexcept;
    /// Per-channel fill; `values` must have `channels()` entries.
    void fill(std::span<const double> values);

    /// Rounds every sample through single precision.
    void round_to_single() noexcept;

    /// Same samples, shape and tag.
    friend bool operator==(const ImagePlane& a, const ImagePlane& b);

private:
    std::size_t index(int c, long y, long x) const noexcept {
        return (static_cast<std::size_t>(c) * static_cast<std::size_t>(height_) + static_cast<std::size_t>(y)) *
                   static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(x);
    }

    int channels_ = 0;
    long height_ = 0;
    long width_ = 0;
    double resolution_ = 0.0;
    SampleBuffer buffer_;
};

std::string describe_shape(const ImagePlane& img);

}  // namespace tilediff
