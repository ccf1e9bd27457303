#pragma once

#include <limits>
#include <ostream>
#include <stdexcept>

namespace tfm {

/// Value in (−∞, +∞]. The infinite state is a tag, never a floating-point inf.
class ExtReal {
public:
    constexpr ExtReal() = default;
    constexpr ExtReal(double v) : value_(v) {}  // NOLINT: implicit on purpose

    static constexpr ExtReal infinity() {
        ExtReal r;
        r.infinite_ = true;
        return r;
    }

    constexpr bool is_finite() const { return !infinite_; }
    constexpr bool is_infinite() const { return infinite_; }

    double value() const {
        if (infinite_) throw std::domain_error("ExtReal: value() of +inf");
        return value_;
    }
    /// Finite value, or `big` when infinite. For optimizers that need a number.
    constexpr double value_or(double big) const { return infinite_ ? big : value_; }

    friend constexpr ExtReal operator+(ExtReal a, ExtReal b) {
        if (a.infinite_ || b.infinite_) return infinity();
        return ExtReal(a.value_ + b.value_);
    }
    /// Nonnegative scalar weight; 0·(+∞) = 0 as in measure theory.
    friend constexpr ExtReal operator*(double w, ExtReal a) {
        if (a.infinite_) return w == 0.0 ? ExtReal(0.0) : infinity();
        return ExtReal(w * a.value_);
    }

    friend constexpr bool operator<(ExtReal a, ExtReal b) {
        if (a.infinite_) return false;
        if (b.infinite_) return true;
        return a.value_ < b.value_;
    }
    friend constexpr bool operator<=(ExtReal a, ExtReal b) { return !(b < a); }
    friend constexpr bool operator>(ExtReal a, ExtReal b) { return b < a; }
    friend constexpr bool operator==(ExtReal a, ExtReal b) {
        return a.infinite_ == b.infinite_ && (a.infinite_ || a.value_ == b.value_);
    }

    friend std::ostream& operator<<(std::ostream& os, ExtReal a) {
        if (a.infinite_) return os << "inf";
        return os << a.value_;
    }

private:
    double value_ = 0.0;
    bool infinite_ = false;
};

inline ExtReal min(ExtReal a, ExtReal b) { return b < a ? b : a; }

}  // namespace tfm
