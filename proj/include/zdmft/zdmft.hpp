#pragma once

#include "zdmft/fock.hpp"
#include "zdmft/lindblad.hpp"
#include "zdmft/spectral.hpp"
#include "zdmft/solver.hpp"
#include "zdmft/bath.hpp"
#include "zdmft/dmft.hpp"
#include "zdmft/zeno.hpp"
#include "zdmft/io.hpp"
