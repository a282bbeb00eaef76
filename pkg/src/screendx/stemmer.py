"""Classic Porter stemming algorithm (1980), steps 1a through 5b."""


def _cons(word, i):
    ch = word[i]
    if ch in "aeiou":
        return False
    if ch == "y":
        return i == 0 or not _cons(word, i - 1)
    return True


def _measure(stem):
    forms = ""
    for i in range(len(stem)):
        forms += "c" if _cons(stem, i) else "v"
    forms = forms.replace("cc", "c").replace("cc", "c")
    m = 0
    prev = None
    for ch in forms:
        if prev == "v" and ch == "c":
            m += 1
        if ch != prev:
            prev = ch
    return m


def _has_vowel(stem):
    return any(not _cons(stem, i) for i in range(len(stem)))


def _ends_double_cons(word):
    return (len(word) >= 2 and word[-1] == word[-2]
            and _cons(word, len(word) - 1))


def _cvc(word):
    if len(word) < 3:
        return False
    if (_cons(word, len(word) - 3) and not _cons(word, len(word) - 2)
            and _cons(word, len(word) - 1)):
        return word[-1] not in "wxy"
    return False


def _replace(word, suffix, repl, m_min=0):
    if word.endswith(suffix):
        stem = word[:len(word) - len(suffix)]
        if _measure(stem) > m_min:
            return stem + repl, True
        return word, True  # suffix matched but condition failed
    return word, False


_STEP2 = [("ational", "ate"), ("tional", "tion"), ("enci", "ence"),
          ("anci", "ance"), ("izer", "ize"), ("abli", "able"),
          ("alli", "al"), ("entli", "ent"), ("eli", "e"), ("ousli", "ous"),
          ("ization", "ize"), ("ation", "ate"), ("ator", "ate"),
          ("alism", "al"), ("iveness", "ive"), ("fulness", "ful"),
          ("ousness", "ous"), ("aliti", "al"), ("iviti", "ive"),
          ("biliti", "ble")]

_STEP3 = [("icate", "ic"), ("ative", ""), ("alize", "al"), ("iciti", "ic"),
          ("ical", "ic"), ("ful", ""), ("ness", "")]

_STEP4 = ["al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement",
          "ment", "ent", "ou", "ism", "ate", "iti", "ous", "ive", "ize"]


def stem(word):
    word = word.lower()
    if len(word) <= 2:
        return word
    # step 1a
    if word.endswith("sses"):
        word = word[:-2]
    elif word.endswith("ies"):
        word = word[:-2]
    elif not word.endswith("ss") and word.endswith("s"):
        word = word[:-1]
    # step 1b
    flag = False
    if word.endswith("eed"):
        if _measure(word[:-3]) > 0:
            word = word[:-1]
    elif word.endswith("ed") and _has_vowel(word[:-2]):
        word = word[:-2]
        flag = True
    elif word.endswith("ing") and _has_vowel(word[:-3]):
        word = word[:-3]
        flag = True
    if flag:
        if word.endswith(("at", "bl", "iz")):
            word += "e"
        elif _ends_double_cons(word) and word[-1] not in "lsz":
            word = word[:-1]
        elif _measure(word) == 1 and _cvc(word):
            word += "e"
    # step 1c
    if word.endswith("y") and _has_vowel(word[:-1]):
        word = word[:-1] + "i"
    # step 2
    for suf, repl in _STEP2:
        if word.endswith(suf):
            stem_ = word[:len(word) - len(suf)]
            if _measure(stem_) > 0:
                word = stem_ + repl
            break
    # step 3
    for suf, repl in _STEP3:
        if word.endswith(suf):
            stem_ = word[:len(word) - len(suf)]
            if _measure(stem_) > 0:
                word = stem_ + repl
            break
    # step 4
    for suf in _STEP4:
        if word.endswith(suf):
            stem_ = word[:len(word) - len(suf)]
            if suf == "ion" and (not stem_ or stem_[-1] not in "st"):
                continue
            if _measure(stem_) > 1:
                word = stem_
            break
    else:
        if word.endswith("ion"):
            stem_ = word[:-3]
            if stem_ and stem_[-1] in "st" and _measure(stem_) > 1:
                word = stem_
    # step 5a
    if word.endswith("e"):
        stem_ = word[:-1]
        m = _measure(stem_)
        if m > 1 or (m == 1 and not _cvc(stem_)):
            word = stem_
    # step 5b
    if _measure(word) > 1 and _ends_double_cons(word) and word[-1] == "l":
        word = word[:-1]
    return word
