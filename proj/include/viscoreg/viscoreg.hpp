#pragma once

#include "viscoreg/eikonal_oracle.hpp"
#include "viscoreg/experiments.hpp"
#include "viscoreg/extract.hpp"
#include "viscoreg/field_net.hpp"
#include "viscoreg/flow_lab.hpp"
#include "viscoreg/losses.hpp"
#include "viscoreg/metrics.hpp"
#include "viscoreg/sampler_io.hpp"
#include "viscoreg/trainer.hpp"
