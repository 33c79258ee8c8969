from context_var import ContextVar

ctx_tape = ContextVar()


def active_tape():
    try:
        return ctx_tape.get()
    except (LookupError, IndexError):
        return None
