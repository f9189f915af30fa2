"""hkforge: numerical hyperkahler metrics and their machine-checked identities.

Subpackages cover special functions and ray quadrature, the charge lattice
with Kontsevich-Soibelman transformations, pointwise frame geometry, semi-flat
c-map metrics, the Ooguri-Vafa metric in its dual closed forms, and the
instanton-corrected twistor construction solved by Picard iteration.
"""

__version__ = "0.1.0"
