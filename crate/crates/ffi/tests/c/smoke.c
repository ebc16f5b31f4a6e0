#include <math.h>
#include <stdio.h>
#include "wetting.h"

int main(void) {
    WettingParams p;
    if (wetting_params_default(&p) != WETTING_STATUS_OK) return 10;
    p.pinning = WETTING_PINNING_DELTA;
    p.epsilon = 0.5;

    WettingExact ex;
    if (wetting_exact(&p, &ex) != WETTING_STATUS_OK) return 11;
    if (fabs(ex.rho - 0.5) > 1e-12) return 12;

    p.sweeps = 20000;
    WettingSummary s;
    if (wetting_run(&p, &s) != WETTING_STATUS_OK) return 13;
    if (fabs(s.rho - 0.5) > 5 * s.rho_se + 1e-3) return 14;

    p.kernel = WETTING_KERNEL_METROPOLIS;
    WettingChain *chain = NULL;
    if (wetting_chain_new(&p, &chain) != WETTING_STATUS_USAGE) return 15;
    if (wetting_last_error() == NULL) return 16;

    WettingLattice *lat = NULL;
    if (wetting_lattice_new(2, 5, &lat) != WETTING_STATUS_OK) return 17;
    if (wetting_lattice_boundary_len(lat) != 16) return 18;
    wetting_lattice_free(lat);

    printf("ok %s\n", wetting_version());
    return 0;
}
