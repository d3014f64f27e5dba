"""Random active path model and feedforward-network redundancy experiments.

``rapnet.graph``    RAP instances, degree statistics, dropconnect/degree maps
``rapnet.solver``   belief propagation, Bethe thermodynamics, critical point
``rapnet.exact``    brute-force enumeration oracle
``rapnet.network``  sigmoid/softmax networks, dropconnect, feedback alignment
``rapnet.data``     IDX and synthetic datasets, config files, CSV output
``rapnet.cli``      batch runs that write CSV
"""

__version__ = "0.1.0"
