import locale
import sys
import traceback

locale.setlocale(locale.LC_ALL, "")

import session_helper
from config import get_configuration
from progress import AnsiColors, wrap_color


def exit_code(error: BaseException) -> int:
    """
    0 success, 2 configuration error, 3 missing upstream artifact, 4 any other failure.
    """
    return getattr(error, "exit_code", 4)


def main(argv=None) -> int:
    cf = get_configuration(tuple(session_helper.session_types.keys()), argv)
    try:
        session_type = session_helper.create_session(cf)
        config = session_type.create_config(cf)
        session = session_type.instantiate(cf)
        session.start(config)
    except Exception as e:
        code = exit_code(e)
        if code == 4:
            traceback.print_exc()
        print(wrap_color(f"{type(e).__name__}: {e}", AnsiColors.RED), file=sys.stderr)
        return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
