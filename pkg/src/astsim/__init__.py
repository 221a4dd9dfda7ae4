"""Cross-platform binary function similarity from AST shape.

Pipeline: parse or load function ASTs, digitalize and binarize them,
encode with a binary Tree-LSTM, compare encodings with a learned
similarity head, then calibrate scores with callee-count agreement.
"""

from astsim.ast_core import (
    AstNode,
    BinTree,
    FunctionAst,
    binarize_lcrs,
    digitize,
    json_to_ast,
    ast_to_json,
    validate,
)

__all__ = [
    "AstNode",
    "BinTree",
    "FunctionAst",
    "binarize_lcrs",
    "digitize",
    "json_to_ast",
    "ast_to_json",
    "validate",
]
