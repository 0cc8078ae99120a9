#include "hsiseg/tensor.hpp"

namespace hsi {

std::string shape_to_string(const Shape& shape) {
    std::string out = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + ")";
}

void require_same_shape(const Shape& expected, const Shape& actual, const std::string& what) {
    if (expected != actual) {
        throw ShapeError(what + ": expected shape " + shape_to_string(expected) + ", got " +
                         shape_to_string(actual));
    }
}

} // namespace hsi
