#pragma once

#include <atomic>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "divtime/util.hpp"

namespace divtime {

// Error from parse_expression, carrying the byte offset of the failure.
struct ExprError : std::runtime_error {
    std::size_t offset;
    ExprError(const std::string& msg, std::size_t off)
        : std::runtime_error(msg + " at offset " + std::to_string(off)), offset(off) {}
};

// A parsed arithmetic expression over variables t, x, y, z.
//
// Grammar: reals, t/x/y/z, + - * / ^, parentheses, sin cos exp abs sqrt
// min max, constant pi. Evaluation is deterministic; domain faults
// (sqrt of a negative) produce NaN and set the nan flag.
class Expression {
  public:
    double eval(double t, const Vec& x) const;
    double operator()(double t, const Vec& x) const { return eval(t, x); }

    bool nan_flagged() const { return nan_flag_->load(std::memory_order_relaxed); }
    void clear_nan_flag() { nan_flag_->store(false, std::memory_order_relaxed); }
    const std::string& source() const { return src_; }

  private:
    friend Expression parse_expression(const std::string&);
    enum class Op : std::uint8_t {
        PushConst, PushT, PushX, PushY, PushZ,
        Add, Sub, Mul, Div, Pow, Neg,
        Sin, Cos, Exp, Abs, Sqrt, Min, Max,
    };
    std::vector<Op> prog_;
    std::vector<double> consts_;
    std::string src_;
    std::shared_ptr<std::atomic<bool>> nan_flag_ = std::make_shared<std::atomic<bool>>(false);
};

Expression parse_expression(const std::string& src);

}  // namespace divtime
