#pragma once

#include "util.hpp"
#include "lattice.hpp"
#include "kernel.hpp"
#include "multiscale.hpp"
#include "detect.hpp"
#include "harness.hpp"
#include "verify.hpp"
