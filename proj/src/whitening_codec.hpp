#pragma once

#include "binary_io.hpp"
#include "ifs/descriptor.hpp"

namespace ifs::detail {

void put_whitening(ByteWriter& out, const WhiteningModel& model);
WhiteningModel parse_whitening(ByteReader& in);

}  // namespace ifs::detail
