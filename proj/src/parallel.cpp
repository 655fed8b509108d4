#include "cbct/parallel.hpp"

namespace cbct {

namespace {

std::atomic<unsigned> lanes_setting{0};

}  // namespace

unsigned worker_lanes()
{
    const unsigned lanes = lanes_setting.load();
    if (lanes > 0)
        return lanes;
    return std::max(1u, std::thread::hardware_concurrency());
}

void set_worker_lanes(unsigned lanes)
{
    lanes_setting = lanes;
}

}  // namespace cbct
