#pragma once

#include "cpcomposer/config.hpp"
#include "cpcomposer/constraints.hpp"
#include "cpcomposer/denoiser.hpp"
#include "cpcomposer/diffusion.hpp"
#include "cpcomposer/encoding.hpp"
#include "cpcomposer/error.hpp"
#include "cpcomposer/eval.hpp"
#include "cpcomposer/geometry.hpp"
#include "cpcomposer/graph.hpp"
#include "cpcomposer/parallel.hpp"
#include "cpcomposer/structure_io.hpp"
#include "cpcomposer/tensor.hpp"
