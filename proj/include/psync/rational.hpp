#pragma once

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>

namespace psync {

// Exact rational number. Values that fit in int64 numerator/denominator use a
// fast path; anything larger is promoted to an arbitrary-precision backend.
class Q {
public:
    Q() = default;
    Q(long long n) : num_(n), den_(1) {}  // NOLINT(google-explicit-constructor)
    Q(long long n, long long d);
    Q(const Q& o);
    Q(Q&& o) noexcept;
    Q& operator=(const Q& o);
    Q& operator=(Q&& o) noexcept;
    ~Q();

    // Accepts "p/q", "p", or a decimal literal such as "1.004" or "-2.5".
    static Q parse(const std::string& s);

    bool big() const { return static_cast<bool>(big_); }
    // Numerator/denominator as decimal strings (always valid).
    std::string num_str() const;
    std::string den_str() const;
    // Fast-path accessors; only meaningful when !big().
    long long num() const { return num_; }
    long long den() const { return den_; }

    std::string str() const;  // "p/q" or "p" when the denominator is 1
    std::string decimal(int digits = 6) const;
    double to_double() const;

    int sign() const;
    Q abs() const { return sign() < 0 ? -*this : *this; }
    Q floor() const;
    Q ceil() const;
    // Smallest multiple of step that is >= *this (step > 0).
    Q ceil_to(const Q& step) const;
    // Smallest multiple of step that is strictly greater than *this.
    Q next_multiple(const Q& step) const;

    Q operator-() const;
    friend Q operator+(const Q& a, const Q& b);
    friend Q operator-(const Q& a, const Q& b);
    friend Q operator*(const Q& a, const Q& b);
    friend Q operator/(const Q& a, const Q& b);
    Q& operator+=(const Q& b) { return *this = *this + b; }
    Q& operator-=(const Q& b) { return *this = *this - b; }
    Q& operator*=(const Q& b) { return *this = *this * b; }
    Q& operator/=(const Q& b) { return *this = *this / b; }

    friend bool operator==(const Q& a, const Q& b);
    friend std::strong_ordering operator<=>(const Q& a, const Q& b);

    friend std::ostream& operator<<(std::ostream& os, const Q& q);

private:
    struct Big;
    struct BigDeleter {
        void operator()(Big* b) const;
    };
    long long num_ = 0;
    long long den_ = 1;
    std::unique_ptr<Big, BigDeleter> big_;

    static Q from_big(Big&& b);
    Big to_big() const;
    void normalize_small(__int128 n, __int128 d);
};

Q qmin(const Q& a, const Q& b);
Q qmax(const Q& a, const Q& b);

}  // namespace psync
