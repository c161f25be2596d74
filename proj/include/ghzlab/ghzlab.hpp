#pragma once

#include "ghzlab/counts.hpp"
#include "ghzlab/errors.hpp"
#include "ghzlab/qrng.hpp"
#include "ghzlab/quantum.hpp"
#include "ghzlab/random.hpp"
#include "ghzlab/schedule.hpp"
#include "ghzlab/simulator.hpp"
#include "ghzlab/spacetime.hpp"
#include "ghzlab/timetag.hpp"
#include "ghzlab/tomography.hpp"
#include "ghzlab/uncertain.hpp"
