#include "psync/rational.hpp"

#include <gmpxx.h>

#include <cctype>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace psync {

struct Q::Big {
    mpq_class v;
};

void Q::BigDeleter::operator()(Big* b) const { delete b; }

namespace {

using i128 = __int128;

i128 gcd128(i128 a, i128 b) {
    if (a < 0) a = -a;
    if (b < 0) b = -b;
    while (b != 0) {
        i128 t = a % b;
        a = b;
        b = t;
    }
    return a;
}

constexpr i128 kMax = std::numeric_limits<long long>::max();

bool fits(i128 v) { return v <= kMax && v >= -kMax; }

std::string i128_str(i128 v) {
    if (v == 0) return "0";
    bool neg = v < 0;
    unsigned __int128 u = neg ? static_cast<unsigned __int128>(-v) : static_cast<unsigned __int128>(v);
    std::string out;
    while (u > 0) {
        out.push_back(static_cast<char>('0' + static_cast<int>(u % 10)));
        u /= 10;
    }
    if (neg) out.push_back('-');
    return {out.rbegin(), out.rend()};
}

mpz_class to_mpz(i128 v) {
    mpz_class z(i128_str(v));
    return z;
}

}  // namespace

Q::Q(long long n, long long d) {
    if (d == 0) throw std::domain_error("rational with zero denominator");
    normalize_small(n, d);
}

Q::Q(const Q& o) : num_(o.num_), den_(o.den_) {
    if (o.big_) big_ = std::unique_ptr<Big, BigDeleter>(new Big(*o.big_));
}

Q& Q::operator=(const Q& o) {
    if (this == &o) return *this;
    num_ = o.num_;
    den_ = o.den_;
    if (o.big_) {
        big_ = std::unique_ptr<Big, BigDeleter>(new Big(*o.big_));
    } else {
        big_.reset();
    }
    return *this;
}

Q::Q(Q&& o) noexcept = default;
Q& Q::operator=(Q&& o) noexcept = default;
Q::~Q() = default;

void Q::normalize_small(i128 n, i128 d) {
    if (d < 0) {
        n = -n;
        d = -d;
    }
    i128 g = gcd128(n, d);
    if (g > 1) {
        n /= g;
        d /= g;
    }
    if (n == 0) d = 1;
    if (fits(n) && fits(d)) {
        num_ = static_cast<long long>(n);
        den_ = static_cast<long long>(d);
        big_.reset();
        return;
    }
    Big b;
    b.v = mpq_class(to_mpz(n), to_mpz(d));
    b.v.canonicalize();
    *this = from_big(std::move(b));
}

Q Q::from_big(Big&& b) {
    Q q;
    const mpz_class& n = b.v.get_num();
    const mpz_class& d = b.v.get_den();
    if (n.fits_slong_p() && d.fits_slong_p() && n.get_si() != std::numeric_limits<long>::min()) {
        q.num_ = n.get_si();
        q.den_ = d.get_si();
        return q;
    }
    q.num_ = 0;
    q.den_ = 1;
    q.big_ = std::unique_ptr<Big, BigDeleter>(new Big(std::move(b)));
    return q;
}

Q::Big Q::to_big() const {
    if (big_) return *big_;
    Big b;
    b.v = mpq_class(mpz_class(static_cast<long>(num_)), mpz_class(static_cast<long>(den_)));
    return b;
}

Q Q::parse(const std::string& raw) {
    std::string s;
    for (char c : raw)
        if (!std::isspace(static_cast<unsigned char>(c))) s.push_back(c);
    if (s.empty()) throw std::invalid_argument("empty rational literal");
    auto slash = s.find('/');
    auto checked_int = [&](const std::string& t) {
        if (t.empty()) throw std::invalid_argument("bad rational literal '" + raw + "'");
        size_t i = (t[0] == '-' || t[0] == '+') ? 1 : 0;
        if (i == t.size()) throw std::invalid_argument("bad rational literal '" + raw + "'");
        for (; i < t.size(); ++i)
            if (!std::isdigit(static_cast<unsigned char>(t[i])))
                throw std::invalid_argument("bad rational literal '" + raw + "'");
        return mpz_class(t[0] == '+' ? t.substr(1) : t);
    };
    Big b;
    if (slash != std::string::npos) {
        mpz_class n = checked_int(s.substr(0, slash));
        mpz_class d = checked_int(s.substr(slash + 1));
        if (d == 0) throw std::domain_error("rational with zero denominator");
        b.v = mpq_class(n, d);
    } else {
        auto dot = s.find('.');
        if (dot == std::string::npos) {
            b.v = mpq_class(checked_int(s));
        } else {
            std::string ip = s.substr(0, dot);
            std::string fp = s.substr(dot + 1);
            bool neg = !ip.empty() && ip[0] == '-';
            if (ip.empty() || ip == "-" || ip == "+") ip += "0";
            mpz_class whole = checked_int(ip);
            mpz_class frac = fp.empty() ? mpz_class(0) : checked_int(fp);
            if (!fp.empty() && (fp[0] == '-' || fp[0] == '+'))
                throw std::invalid_argument("bad rational literal '" + raw + "'");
            mpz_class scale;
            mpz_ui_pow_ui(scale.get_mpz_t(), 10, fp.size());
            mpz_class absw = whole < 0 ? mpz_class(-whole) : whole;
            mpz_class n = absw * scale + frac;
            if (neg) n = -n;
            b.v = mpq_class(n, scale);
        }
    }
    b.v.canonicalize();
    return from_big(std::move(b));
}

std::string Q::num_str() const { return big_ ? big_->v.get_num().get_str() : std::to_string(num_); }
std::string Q::den_str() const { return big_ ? big_->v.get_den().get_str() : std::to_string(den_); }

std::string Q::str() const {
    if (big_) return big_->v.get_str();
    if (den_ == 1) return std::to_string(num_);
    return std::to_string(num_) + "/" + std::to_string(den_);
}

std::string Q::decimal(int digits) const {
    // Round half away from zero at the requested number of fractional digits.
    Big b = to_big();
    mpz_class scale;
    mpz_ui_pow_ui(scale.get_mpz_t(), 10, static_cast<unsigned long>(digits));
    mpq_class scaled = (b.v < 0 ? mpq_class(-b.v) : b.v) * scale;
    mpz_class n = scaled.get_num();
    mpz_class d = scaled.get_den();
    mpz_class q = (2 * n + d) / (2 * d);
    std::string body = q.get_str();
    if (digits > 0) {
        if (body.size() <= static_cast<size_t>(digits)) body.insert(0, static_cast<size_t>(digits) + 1 - body.size(), '0');
        body.insert(body.size() - static_cast<size_t>(digits), ".");
    }
    if (b.v < 0 && q != 0) body.insert(0, "-");
    return body;
}

double Q::to_double() const {
    if (big_) return big_->v.get_d();
    return static_cast<double>(num_) / static_cast<double>(den_);
}

int Q::sign() const {
    if (big_) return sgn(big_->v);
    return num_ > 0 ? 1 : (num_ < 0 ? -1 : 0);
}

Q Q::floor() const {
    if (!big_) {
        long long q = num_ / den_;
        if (num_ % den_ != 0 && num_ < 0) --q;
        return Q(q);
    }
    mpz_class r;
    mpz_fdiv_q(r.get_mpz_t(), big_->v.get_num_mpz_t(), big_->v.get_den_mpz_t());
    Big b;
    b.v = mpq_class(r);
    return from_big(std::move(b));
}

Q Q::ceil() const { return -(-*this).floor(); }

Q Q::ceil_to(const Q& step) const { return (*this / step).ceil() * step; }

Q Q::next_multiple(const Q& step) const { return ((*this / step).floor() + Q(1)) * step; }

Q Q::operator-() const {
    if (!big_) return Q(-num_, den_);
    Big b;
    b.v = -big_->v;
    return from_big(std::move(b));
}

Q operator+(const Q& a, const Q& b) {
    if (!a.big_ && !b.big_) {
        if (a.den_ == b.den_) {
            Q r;
            r.normalize_small(static_cast<i128>(a.num_) + b.num_, a.den_);
            return r;
        }
        i128 g = gcd128(a.den_, b.den_);
        i128 bd = b.den_ / g;
        i128 n = static_cast<i128>(a.num_) * bd + static_cast<i128>(b.num_) * (a.den_ / g);
        Q r;
        r.normalize_small(n, static_cast<i128>(a.den_) * bd);
        return r;
    }
    Q::Big x = a.to_big();
    x.v += b.to_big().v;
    return Q::from_big(std::move(x));
}

Q operator-(const Q& a, const Q& b) { return a + (-b); }

Q operator*(const Q& a, const Q& b) {
    if (!a.big_ && !b.big_) {
        i128 g1 = gcd128(a.num_, b.den_);
        i128 g2 = gcd128(b.num_, a.den_);
        if (g1 == 0) g1 = 1;
        if (g2 == 0) g2 = 1;
        i128 n = (static_cast<i128>(a.num_) / g1) * (static_cast<i128>(b.num_) / g2);
        i128 d = (static_cast<i128>(a.den_) / g2) * (static_cast<i128>(b.den_) / g1);
        Q r;
        r.normalize_small(n, d);
        return r;
    }
    Q::Big x = a.to_big();
    x.v *= b.to_big().v;
    return Q::from_big(std::move(x));
}

Q operator/(const Q& a, const Q& b) {
    if (b.sign() == 0) throw std::domain_error("rational division by zero");
    if (!a.big_ && !b.big_) {
        Q inv;
        inv.normalize_small(b.den_, b.num_);
        return a * inv;
    }
    Q::Big x = a.to_big();
    x.v /= b.to_big().v;
    return Q::from_big(std::move(x));
}

bool operator==(const Q& a, const Q& b) {
    if (!a.big_ && !b.big_) return a.num_ == b.num_ && a.den_ == b.den_;
    if (a.big_ && b.big_) return a.big_->v == b.big_->v;
    return false;
}

std::strong_ordering operator<=>(const Q& a, const Q& b) {
    if (!a.big_ && !b.big_) {
        if (a.den_ == b.den_) return a.num_ <=> b.num_;
        i128 l = static_cast<i128>(a.num_) * b.den_;
        i128 r = static_cast<i128>(b.num_) * a.den_;
        return l < r ? std::strong_ordering::less : (l > r ? std::strong_ordering::greater : std::strong_ordering::equal);
    }
    int c = cmp(a.to_big().v, b.to_big().v);
    return c < 0 ? std::strong_ordering::less : (c > 0 ? std::strong_ordering::greater : std::strong_ordering::equal);
}

std::ostream& operator<<(std::ostream& os, const Q& q) { return os << q.str(); }

Q qmin(const Q& a, const Q& b) { return b < a ? b : a; }
Q qmax(const Q& a, const Q& b) { return a < b ? b : a; }

}  // namespace psync
