"""Tour of the node schema language.

Parse the stock schemas, look at what validation derives from them, and
define a custom structure of our own.
"""

from dynten import (
    STOCK_FAMILIES, load_stock_schema, parse_schema, print_schema, validate,
    family_sorted,
)

print("Stock schema families:")
for family in STOCK_FAMILIES:
    s = load_stock_schema(family)
    root = s.root_candidates[0]
    tails = [n.name for n in s.nodes if n.single_tail]
    print(f"  {family:16s} root={root:12s} sorted={family_sorted(s, root)!s:5s} "
          f"single_tail={tails or '-'}")

print("\nThe blist schema, canonically printed:")
print(print_schema(load_stock_schema("blist")))

# A custom structure: a skip-list-flavored chain storing two elements per
# node. Anything the validator accepts can drive the code generators.
custom = """
# two elements per node, tail-linked
def duo {
  a : elem nonempty
  b : elem
  n : duo
  seq = a, b, n
}

def duo_head {
  h : duo
}
"""
s = validate(parse_schema(custom, "duo"))
node = s.node("duo")
print(f"custom 'duo': single_tail={node.single_tail} is_sorted={node.is_sorted}")
print("round-trips:", print_schema(parse_schema(print_schema(s))) == print_schema(s))
