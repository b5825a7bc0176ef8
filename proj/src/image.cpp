#include "tilediff/image.hpp"

#include "tilediff/error.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <sstream>
#include <string>

namespace tilediff {

std::string FailureSite::describe() const {
    std::ostringstream os;
    bool first = true;
    auto field = [&](const char* name, auto v) {
        if (!v) return;
        os << (first ? "" : " ") << name << '=' << *v;
        first = false;
    };
    field("stage", stage);
    field("iteration", iteration);
    field("patch", patch);
    field("step", step);
    return os.str();
}

NumericalFailure::NumericalFailure(const std::string& what, FailureSite site)
    : Error(site.describe().empty() ? what : what + " (" + site.describe() + ")"),
      reason_(what),
      site_(site) {}

NumericalFailure NumericalFailure::with_context(const FailureSite& outer) const {
    FailureSite merged = site_;
    if (!merged.step) merged.step = outer.step;
    if (!merged.stage) merged.stage = outer.stage;
    if (!merged.iteration) merged.iteration = outer.iteration;
    if (!merged.patch) merged.patch = outer.patch;
    return NumericalFailure(reason_, merged);
}

namespace detail {

// Anonymous scratch file mapped read/write; the file is unlinked right
// after creation so it disappears with the mapping.
class MappedRegion {
public:
    MappedRegion(std::size_t count, std::filesystem::path dir) : count_(count), dir_(std::move(dir)) {
        static std::atomic<unsigned long> counter{0};
        std::filesystem::create_directories(dir_);
        auto path = dir_ / ("tilediff-scratch-" + std::to_string(::getpid()) + "-" +
                            std::to_string(counter.fetch_add(1)) + ".bin");
        int fd = ::open(path.c_str(), O_RDWR | O_CREAT | O_EXCL, 0600);
        if (fd < 0) throw IoError("cannot create scratch file " + path.string());
        ::unlink(path.c_str());
        const std::size_t bytes = std::max<std::size_t>(count * sizeof(double), 1);
        if (::ftruncate(fd, static_cast<off_t>(bytes)) != 0) {
            ::close(fd);
            throw IoError("cannot size scratch file " + path.string());
        }
        void* p = ::mmap(nullptr, bytes, PROT_READ | PROT_WRITE, MAP_SHARED, fd, 0);
        ::close(fd);
        if (p == MAP_FAILED) throw IoError("cannot map scratch file " + path.string());
        data_ = static_cast<double*>(p);
        bytes_ = bytes;
    }
    ~MappedRegion() { ::munmap(data_, bytes_); }
    MappedRegion(const MappedRegion&) = delete;
    MappedRegion& operator=(const MappedRegion&) = delete;

    double* data() noexcept { return data_; }
    std::size_t count() const noexcept { return count_; }
    const std::filesystem::path& dir() const noexcept { return dir_; }

private:
    std::size_t count_;
    std::filesystem::path dir_;
    double* data_ = nullptr;
    std::size_t bytes_ = 0;
};

}  // namespace detail

SampleBuffer::SampleBuffer(std::size_t count, double fill) : heap_(count, fill) { rebind(); }

SampleBuffer SampleBuffer::mapped(std::size_t count, const std::filesystem::path& dir) {
    SampleBuffer b;
    b.mapped_ = std::make_unique<detail::MappedRegion>(count, dir);
    b.rebind();
    return b;
}

SampleBuffer::SampleBuffer(const SampleBuffer& other) {
    if (other.mapped_) {
        mapped_ = std::make_unique<detail::MappedRegion>(other.size_, other.mapped_->dir());
    } else {
        heap_.resize(other.size_);
    }
    rebind();
    if (size_ > 0) std::memcpy(data_, other.data_, size_ * sizeof(double));
}

SampleBuffer& SampleBuffer::operator=(const SampleBuffer& other) {
    if (this != &other) {
        SampleBuffer tmp(other);
        *this = std::move(tmp);
    }
    return *this;
}

SampleBuffer::SampleBuffer(SampleBuffer&& other) noexcept
    : heap_(std::move(other.heap_)), mapped_(std::move(other.mapped_)) {
    rebind();
    other.heap_.clear();
    other.rebind();
}

SampleBuffer& SampleBuffer::operator=(SampleBuffer&& other) noexcept {
    if (this != &other) {
        heap_ = std::move(other.heap_);
        mapped_ = std::move(other.mapped_);
        rebind();
        other.heap_.clear();
        other.rebind();
    }
    return *this;
}

SampleBuffer::SampleBuffer() noexcept = default;
SampleBuffer::~SampleBuffer() = default;

void SampleBuffer::rebind() {
    if (mapped_) {
        data_ = mapped_->data();
        size_ = mapped_->count();
    } else {
        data_ = heap_.data();
        size_ = heap_.size();
    }
}

namespace {

std::size_t sample_count(int channels, long height, long width) {
    if (channels <= 0 || height < 0 || width < 0) {
        throw InvalidParameter("image shape must have positive channels and non-negative extent");
    }
    return static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
}

}  // namespace

ImagePlane::ImagePlane(int channels, long height, long width, double resolution, double fill)
    : channels_(channels),
      height_(height),
      width_(width),
      resolution_(resolution),
      buffer_(sample_count(channels, height, width), fill) {}

ImagePlane::ImagePlane(int channels, long height, long width, double resolution, const StorageOptions& storage)
    : channels_(channels), height_(height), width_(width), resolution_(resolution) {
    const auto n = sample_count(channels, height, width);
    if (height > storage.spill_extent || width > storage.spill_extent) {
        buffer_ = SampleBuffer::mapped(n, storage.scratch_dir);
    } else {
        buffer_ = SampleBuffer(n);
    }
}

std::span<double> ImagePlane::channel(int c) noexcept {
    const auto n = static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
    return {buffer_.data() + static_cast<std::size_t>(c) * n, n};
}

std::span<const double> ImagePlane::channel(int c) const noexcept {
    const auto n = static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
    return {buffer_.data() + static_cast<std::size_t>(c) * n, n};
}

bool ImagePlane::all_finite() const noexcept {
    return std::all_of(samples().begin(), samples().end(), [](double v) { return std::isfinite(v); });
}

void ImagePlane::fill(double v) noexcept { std::fill(samples().begin(), samples().end(), v); }

void ImagePlane::fill(std::span<const double> values) {
    if (values.size() != static_cast<std::size_t>(channels_)) {
        throw ShapeMismatch("per-channel fill needs one value per channel");
    }
    for (int c = 0; c < channels_; ++c) {
        auto ch = channel(c);
        std::fill(ch.begin(), ch.end(), values[static_cast<std::size_t>(c)]);
    }
}

void ImagePlane::round_to_single() noexcept {
    for (double& v : samples()) v = static_cast<double>(static_cast<float>(v));
}

bool operator==(const ImagePlane& a, const ImagePlane& b) {
    if (!a.same_shape(b) || a.resolution_ != b.resolution_) return false;
    auto sa = a.samples();
    auto sb = b.samples();
    return std::equal(sa.begin(), sa.end(), sb.begin());
}

std::string describe_shape(const ImagePlane& img) {
    return std::to_string(img.channels()) + "x" + std::to_string(img.height()) + "x" + std::to_string(img.width());
}

}  // namespace tilediff
