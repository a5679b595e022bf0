"""Map stacks from protein domain structures and CATH classifiers."""

from ._foldmap import (
    Atom,
    DomainStructure,
    FoldmapError,
    MapStack,
    Model,
    accuracy,
    anm_cross_correlation,
    bicubic_resize,
    build_map_stack,
    combine_probabilities,
    distance_matrix,
    homogeneity,
    kmeans,
    load_checkpoint,
    load_structure,
    nb_energy_matrix,
    parse_pdb,
    parse_pqr,
    read_stack_file,
    run_cli,
    split_sizes,
    weighted_f1,
    write_stack_file,
)

__all__ = [name for name in dir() if not name.startswith("_")]
